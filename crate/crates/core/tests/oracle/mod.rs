//! Naive nested-sum reference implementations of the imitation dynamic.
//!
//! Everything here is built from scratch out of `(n, gamma, alpha)` and plain
//! `Vec<Vec<f64>>` so that it shares no code path with the factorized
//! implementation it checks.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub struct NaiveGame {
    pub n: usize,
    pub prior: Vec<f64>,
    pub utility: Mat,
    pub confusion: Mat,
}

impl NaiveGame {
    pub fn new(n: usize, gamma: f64, alpha: f64) -> Self {
        let sim = |x: usize, y: usize, k: f64| {
            let d = x as f64 - y as f64;
            (-k * d * d).exp()
        };
        let utility = (0..n).map(|x| (0..n).map(|y| sim(x, y, gamma)).collect()).collect();
        let confusion = (0..n)
            .map(|x| {
                let z: f64 = (0..n).map(|y| sim(x, y, alpha)).sum();
                (0..n).map(|y| sim(x, y, alpha) / z).collect()
            })
            .collect();
        Self {
            n,
            prior: vec![1.0 / n as f64; n],
            utility,
            confusion,
        }
    }

    fn p(&self, to: usize, from: usize) -> f64 {
        // p(to | from)
        self.confusion[from][to]
    }

    pub fn sender_eu(&self, r: &Mat) -> Mat {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for xo in 0..n {
            for w in 0..n {
                let mut acc = 0.0;
                for xa in 0..n {
                    for xho in 0..n {
                        for xha in 0..n {
                            acc += self.p(xa, xo) * r[w][xho] * self.p(xha, xho) * self.utility[xa][xha];
                        }
                    }
                }
                out[xo][w] = acc;
            }
        }
        out
    }

    pub fn sender_imitation(&self, s: &Mat) -> Mat {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for xi in 0..n {
            for w in 0..n {
                let mut acc = 0.0;
                for xa in 0..n {
                    for xo in 0..n {
                        acc += self.p(xa, xi) * self.p(xo, xa) * s[xo][w];
                    }
                }
                out[xi][w] = acc;
            }
        }
        out
    }

    pub fn sender_posterior(&self, s: &Mat) -> Mat {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for w in 0..n {
            let mut weights = vec![0.0; n];
            for xa in 0..n {
                for xo in 0..n {
                    weights[xa] += self.prior[xa] * self.p(xo, xa) * s[xo][w];
                }
            }
            let z: f64 = weights.iter().sum();
            for xa in 0..n {
                out[w][xa] = if z > 0.0 { weights[xa] / z } else { self.prior[xa] };
            }
        }
        out
    }

    pub fn receiver_eu(&self, s: &Mat) -> Mat {
        let n = self.n;
        let post = self.sender_posterior(s);
        let mut out = vec![vec![0.0; n]; n];
        for w in 0..n {
            for xho in 0..n {
                let mut acc = 0.0;
                for xa in 0..n {
                    for xha in 0..n {
                        acc += post[w][xa] * self.p(xha, xho) * self.utility[xa][xha];
                    }
                }
                out[w][xho] = acc;
            }
        }
        out
    }

    pub fn receiver_imitation(&self, r: &Mat) -> Mat {
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        for w in 0..n {
            for xi in 0..n {
                let mut acc = 0.0;
                for xha in 0..n {
                    for xho in 0..n {
                        acc += self.p(xi, xha) * self.p(xha, xho) * r[w][xho];
                    }
                }
                out[w][xi] = acc;
            }
        }
        out
    }

    pub fn step(&self, s: &Mat, r: &Mat) -> (Mat, Mat) {
        let normalize = |m: Mat| -> Mat {
            m.into_iter()
                .map(|row| {
                    let z: f64 = row.iter().sum();
                    row.into_iter().map(|v| v / z).collect()
                })
                .collect()
        };
        let (ps, eus) = (self.sender_imitation(s), self.sender_eu(r));
        let (pr, eur) = (self.receiver_imitation(r), self.receiver_eu(s));
        let n = self.n;
        let s_next = (0..n).map(|i| (0..n).map(|j| ps[i][j] * eus[i][j]).collect()).collect();
        let r_next = (0..n).map(|i| (0..n).map(|j| pr[i][j] * eur[i][j]).collect()).collect();
        (normalize(s_next), normalize(r_next))
    }

    pub fn team_eu(&self, s: &Mat, r: &Mat) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for xa in 0..n {
            for xo in 0..n {
                for w in 0..n {
                    for xho in 0..n {
                        for xha in 0..n {
                            acc += self.prior[xa]
                                * self.p(xo, xa)
                                * s[xo][w]
                                * r[w][xho]
                                * self.p(xha, xho)
                                * self.utility[xa][xha];
                        }
                    }
                }
            }
        }
        acc
    }
}

pub fn max_abs_diff(a: &Mat, b: &ndarray::Array2<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b[[i, j]]).abs());
        }
    }
    worst
}

pub fn to_rows(m: &ndarray::Array2<f64>) -> Mat {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}
