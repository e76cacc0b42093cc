//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// 5th-order solution minus embedded 4th-order solution.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 {
            rtol: 1e-6,
            atol: 1e-8,
            max_steps: 200_000,
        }
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

struct Workspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    cont: [Vec<f64>; 5],
    dense: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            cont: std::array::from_fn(|_| vec![0.0; n]),
            dense: vec![0.0; n],
        }
    }
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            ..Default::default()
        }
    }

    fn error_scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    fn initial_step<F>(&self, rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, ws: &mut Workspace) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y0.len() as f64;
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..y0.len() {
            let sc = self.atol + self.rtol * y0[i].abs();
            d0 += (y0[i] / sc).powi(2);
            d1 += (f0[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        for i in 0..y0.len() {
            ws.stage[i] = y0[i] + h0 * f0[i];
        }
        rhs(t0 + h0, &ws.stage, &mut ws.dense);
        let mut d2 = 0.0;
        for i in 0..y0.len() {
            let sc = self.atol + self.rtol * y0[i].abs();
            d2 += ((ws.dense[i] - f0[i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrate `y' = rhs(t, y)` from `t0` to `t_end`, calling `observe(i, t,
    /// y)` with the interpolated state at each point of the ascending `grid`.
    /// `on_step(t, y)` sees every accepted step endpoint.
    #[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
    pub fn solve<F, O, S>(
        &self,
        mut rhs: F,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        grid: &[f64],
        mut observe: O,
        mut on_step: S,
    ) -> Result<SolveStats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(usize, f64, &[f64]),
        S: FnMut(f64, &[f64]),
    {
        if !(t_end > t0) {
            return Err(Error::InvalidArgument(format!("empty time span [{t0}, {t_end}]")));
        }
        if grid.first().is_some_and(|&t| t < t0) || grid.last().is_some_and(|&t| t > t_end) {
            return Err(Error::InvalidArgument("output grid outside the time span".into()));
        }
        let n = y0.len();
        let mut ws = Workspace::new(n);
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut stats = SolveStats::default();

        rhs(t, &y, &mut ws.k[0]);
        stats.rhs_evals += 1;
        let mut next_out = 0;
        while next_out < grid.len() && grid[next_out] <= t0 {
            observe(next_out, grid[next_out], &y);
            next_out += 1;
        }

        let f0 = ws.k[0].clone();
        let mut h = self.initial_step(&mut rhs, t0, &y, &f0, t_end - t0, &mut ws);
        stats.rhs_evals += 1;
        let mut err_prev: f64 = 1e-4;
        let mut rejected_last = false;

        while t < t_end {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::Solver(format!(
                    "step limit {} reached at t = {t}",
                    self.max_steps
                )));
            }
            let last = t + h >= t_end || (t_end - t - h) < 1e-12 * t_end.abs().max(1.0);
            if last {
                h = t_end - t;
            }
            if h <= f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::Solver(format!("step size underflow at t = {t}")));
            }

            for s in 1..7 {
                ws.stage.copy_from_slice(&y);
                for j in 0..s {
                    let a = h * A[s][j];
                    if a != 0.0 {
                        for (st, kj) in ws.stage.iter_mut().zip(&ws.k[j]) {
                            *st += a * kj;
                        }
                    }
                }
                if s == 6 {
                    ws.y_new.copy_from_slice(&ws.stage);
                }
                rhs(t + C[s] * h, &ws.stage, &mut ws.k[s]);
            }
            stats.rhs_evals += 6;

            ws.dense.fill(0.0);
            for (j, e) in E.iter().enumerate() {
                if *e != 0.0 {
                    for (acc, kj) in ws.dense.iter_mut().zip(&ws.k[j]) {
                        *acc += e * kj;
                    }
                }
            }
            let mut err = 0.0;
            for ((e, a), b) in ws.dense.iter().zip(&y).zip(&ws.y_new) {
                err += (h * e / self.error_scale(*a, *b)).powi(2);
            }
            let err = (err / n as f64).sqrt();

            if !err.is_finite() {
                stats.rejected += 1;
                h *= 0.2;
                rejected_last = true;
                continue;
            }

            if err <= 1.0 {
                // Dense-output coefficients for the accepted step.
                for i in 0..n {
                    let dy = ws.y_new[i] - y[i];
                    let bspl = h * ws.k[0][i] - dy;
                    ws.cont[0][i] = y[i];
                    ws.cont[1][i] = dy;
                    ws.cont[2][i] = bspl;
                    ws.cont[3][i] = dy - h * ws.k[6][i] - bspl;
                }
                ws.cont[4].fill(0.0);
                for (j, d) in D.iter().enumerate() {
                    if *d != 0.0 {
                        let hd = h * d;
                        for (c, kj) in ws.cont[4].iter_mut().zip(&ws.k[j]) {
                            *c += hd * kj;
                        }
                    }
                }
                let t_new = if last { t_end } else { t + h };
                while next_out < grid.len() && grid[next_out] <= t_new {
                    let s = ((grid[next_out] - t) / h).clamp(0.0, 1.0);
                    let s1 = 1.0 - s;
                    for i in 0..n {
                        let c = |k: usize| ws.cont[k][i];
                        ws.dense[i] = c(0) + s * (c(1) + s1 * (c(2) + s * (c(3) + s1 * c(4))));
                    }
                    observe(next_out, grid[next_out], &ws.dense);
                    next_out += 1;
                }
                y.copy_from_slice(&ws.y_new);
                t = t_new;
                ws.k.swap(0, 6);
                stats.accepted += 1;
                on_step(t, &y);

                // PI step-size control.
                let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
                let fac = if rejected_last { fac.min(1.0) } else { fac };
                h *= fac.clamp(0.2, 10.0);
                err_prev = err.max(1e-4);
                rejected_last = false;
            } else {
                stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).max(0.2);
                rejected_last = true;
            }
        }
        Ok(stats)
    }
}
