//! Elastic-net logistic regression fitted by proximal gradient descent
//! with backtracking.

use serde::{Deserialize, Serialize};

use crate::data::POSITIVE;
use crate::matrix::Matrix;

const MAX_ITER: usize = 500;
const TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Penalty strength.
    pub lambda: f64,
    /// Share of the L1 term in the penalty.
    pub l1_ratio: f64,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    lambda: f64,
    l1_ratio: f64,
}

impl Problem<'_> {
    /// Smooth part of the objective and, optionally, its gradient.
    fn smooth(&self, w: &[f64], b: f64, grad: Option<(&mut [f64], &mut f64)>) -> f64 {
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        let mut gw_b = 0.0;
        let mut gw = grad.as_ref().map(|_| vec![0.0; w.len()]);
        for (i, row) in self.x.rows_iter().enumerate() {
            let z: f64 = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            let m = self.y[i] * z;
            loss += log1p_exp(-m);
            if let Some(gw) = gw.as_mut() {
                // d/dz log(1 + exp(-y z)) = -y * sigmoid(-y z)
                let s = -self.y[i] / (1.0 + m.exp());
                for (g, a) in gw.iter_mut().zip(row) {
                    *g += s * a;
                }
                gw_b += s;
            }
        }
        let l2 = self.lambda * (1.0 - self.l1_ratio);
        let sq: f64 = w.iter().map(|v| v * v).sum();
        if let (Some((g_out, b_out)), Some(gw)) = (grad, gw) {
            for ((o, g), v) in g_out.iter_mut().zip(gw).zip(w) {
                *o = g / n + l2 * v;
            }
            *b_out = gw_b / n;
        }
        loss / n + 0.5 * l2 * sq
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        self.lambda * self.l1_ratio * w.iter().map(|v| v.abs()).sum::<f64>()
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl LogisticModel {
    pub fn fit(x: &Matrix, y: &[i8], lambda: f64, l1_ratio: f64) -> LogisticModel {
        Self::fit_from(x, y, lambda, l1_ratio, None).0
    }

    /// Fits from an optional warm start; also returns the objective after
    /// every accepted step.
    pub fn fit_from(
        x: &Matrix,
        y: &[i8],
        lambda: f64,
        l1_ratio: f64,
        warm: Option<&LogisticModel>,
    ) -> (LogisticModel, Vec<f64>) {
        let p = x.ncols();
        let prob = Problem {
            x,
            y: y.iter().map(|&l| if l == POSITIVE { 1.0 } else { -1.0 }).collect(),
            lambda,
            l1_ratio,
        };
        let (mut w, mut b) = match warm {
            Some(m) if m.weights.len() == p => (m.weights.clone(), m.intercept),
            _ => (vec![0.0; p], 0.0),
        };
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        let mut step = 1.0;
        let mut f = prob.smooth(&w, b, Some((&mut gw, &mut gb)));
        let mut obj = f + prob.penalty(&w);
        let mut history = vec![obj];
        let l1 = lambda * l1_ratio;
        let mut nw = vec![0.0; p];
        for _ in 0..MAX_ITER {
            let mut accepted = false;
            for _ in 0..60 {
                for j in 0..p {
                    nw[j] = soft(w[j] - step * gw[j], step * l1);
                }
                let nb = b - step * gb;
                let nf = prob.smooth(&nw, nb, None);
                let mut lin = (nb - b) * gb;
                let mut quad = (nb - b).powi(2);
                for j in 0..p {
                    let d = nw[j] - w[j];
                    lin += d * gw[j];
                    quad += d * d;
                }
                if nf <= f + lin + quad / (2.0 * step) + 1e-15 {
                    let nobj = nf + prob.penalty(&nw);
                    if nobj <= obj {
                        std::mem::swap(&mut w, &mut nw);
                        b = nb;
                        accepted = true;
                        let done = (obj - nobj) <= TOL * obj.abs().max(1.0);
                        obj = nobj;
                        history.push(obj);
                        f = prob.smooth(&w, b, Some((&mut gw, &mut gb)));
                        step *= 2.0;
                        if done {
                            return (Self::model(w, b, lambda, l1_ratio), history);
                        }
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (Self::model(w, b, lambda, l1_ratio), history)
    }

    fn model(weights: Vec<f64>, intercept: f64, lambda: f64, l1_ratio: f64) -> LogisticModel {
        LogisticModel {
            weights,
            intercept,
            lambda,
            l1_ratio,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.intercept
    }

    pub fn predict_row(&self, x: &[f64]) -> i8 {
        if self.decision(x) >= 0.0 {
            POSITIVE
        } else {
            -POSITIVE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn objective_decreases_every_step(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, prop::bool::ANY), 4..40),
            lambda in prop::sample::select(vec![0.01, 0.1, 1.0]),
            mix in prop::sample::select(vec![0.25, 0.5, 0.75]),
        ) {
            let rows: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
            let y: Vec<i8> = pts.iter().map(|p| if p.2 { 1 } else { -1 }).collect();
            let (_, h) = LogisticModel::fit_from(&Matrix::from_rows(&rows), &y, lambda, mix, None);
            for w in h.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn separable_line() {
        let rows: Vec<[f64; 1]> = (0..20).map(|i| [i as f64 / 10.0 - 1.0]).collect();
        let y: Vec<i8> = (0..20).map(|i| if i >= 10 { 1 } else { -1 }).collect();
        let m = LogisticModel::fit(&Matrix::from_rows(&rows), &y, 0.01, 0.5);
        assert!(m.weights[0] > 0.0);
        assert_eq!(m.predict_row(&[0.8]), 1);
        assert_eq!(m.predict_row(&[-0.8]), -1);
    }

    #[test]
    fn strong_l1_zeroes_weights() {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [(i as f64).sin(), (i as f64).cos()]).collect();
        let y: Vec<i8> = (0..30).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let m = LogisticModel::fit(&Matrix::from_rows(&rows), &y, 10.0, 1.0);
        assert!(m.weights.iter().all(|&w| w == 0.0));
    }
}
