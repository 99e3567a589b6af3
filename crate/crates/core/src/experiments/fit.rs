//! Least-squares fits for the scaling laws.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Fit of `y = slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub stderr: f64,
    /// Centred coefficient of determination.
    pub r_squared: f64,
    /// 95 % confidence interval on the slope.
    pub ci95: (f64, f64),
    pub n_points: usize,
}

/// Fit of `P_e(t) = 0.5·(1 − exp(−Γt))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpingFit {
    pub gamma: f64,
    pub gamma_stderr: f64,
    pub r_squared: f64,
}

/// Fit of `P_e(t) = 0.5 − 0.5·exp(−γt)·cos(2πft)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedRabiFit {
    pub decay_rate: f64,
    pub decay_rate_stderr: f64,
    pub frequency: f64,
    pub r_squared: f64,
}

fn check_points(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite input".into()));
    }
    Ok(())
}

fn r_squared(y: &[f64], ss_res: f64) -> f64 {
    if ss_res == 0.0 {
        return 1.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof.max(1) as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

/// Closed-form least squares through the origin, `slope = Σxy / Σx²`.
pub fn fit_linear_through_origin(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check_points(x, y)?;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all x values are zero".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    let n = x.len();
    let stderr = (ss_res / (n - 1) as f64 / sxx).sqrt();
    let half = t_quantile_975(n - 1) * stderr;
    Ok(LinearFit {
        slope,
        stderr,
        r_squared: r_squared(y, ss_res),
        ci95: (slope - half, slope + half),
        n_points: n,
    })
}

type Model<'a> = &'a dyn Fn(&[f64], f64, &mut [f64]) -> f64;

/// `y ≈ model(p, t)`; the model writes its parameter gradient into the slice.
struct CurveProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    model: Model<'a>,
    p: DVector<f64>,
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for CurveProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let mut g = vec![0.0; self.p.len()];
        Some(DVector::from_iterator(
            self.t.len(),
            self.t
                .iter()
                .zip(self.y)
                .map(|(&t, &y)| (self.model)(self.p.as_slice(), t, &mut g) - y),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let np = self.p.len();
        let mut j = DMatrix::zeros(self.t.len(), np);
        let mut g = vec![0.0; np];
        for (i, &t) in self.t.iter().enumerate() {
            (self.model)(self.p.as_slice(), t, &mut g);
            for k in 0..np {
                j[(i, k)] = g[k];
            }
        }
        Some(j)
    }
}

struct CurveFit {
    params: Vec<f64>,
    stderr: Vec<f64>,
    ss_res: f64,
}

fn fit_curve(t: &[f64], y: &[f64], p0: &[f64], model: Model) -> Result<CurveFit> {
    let problem = CurveProblem {
        t,
        y,
        model,
        p: DVector::from_column_slice(p0),
    };
    let (problem, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!(
            "did not converge: {:?}",
            report.termination
        )));
    }
    let r = problem.residuals().expect("residuals are total");
    let ss_res = r.norm_squared();
    let j = problem.jacobian().expect("jacobian is total");
    let dof = (t.len() - p0.len()).max(1) as f64;
    let cov = (j.transpose() * &j)
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix".into()))?;
    let stderr = (0..p0.len())
        .map(|k| (cov[(k, k)] * ss_res / dof).max(0.0).sqrt())
        .collect();
    Ok(CurveFit {
        params: problem.p.as_slice().to_vec(),
        stderr,
        ss_res,
    })
}

/// Damped least squares for `0.5·(1 − exp(−Γt))`.
pub fn fit_exponential_saturation(t: &[f64], y: &[f64]) -> Result<PumpingFit> {
    check_points(t, y)?;
    let t_max = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if t_max == 0.0 {
        return Err(Error::Fit("all times are zero".into()));
    }
    // Fit in units of 1/t_max so the parameter is O(1).
    let ts: Vec<f64> = t.iter().map(|v| v / t_max).collect();
    let model = |p: &[f64], t: f64, g: &mut [f64]| {
        let e = (-p[0] * t).exp();
        g[0] = 0.5 * t * e;
        0.5 * (1.0 - e)
    };
    // Initial guess from the early-time slope P ≈ Γt/2.
    let sty: f64 = ts.iter().zip(y).map(|(a, b)| a * b).sum();
    let stt: f64 = ts.iter().map(|a| a * a).sum();
    let guess = (2.0 * sty / stt).clamp(1e-3, 50.0);
    let fit = fit_curve(&ts, y, &[guess], &model)?;
    let (gamma, stderr) = if fit.params[0] < 0.0 {
        // Γ is confined to [0, ∞); a negative optimum means the boundary.
        (0.0, fit.stderr[0])
    } else {
        (fit.params[0], fit.stderr[0])
    };
    Ok(PumpingFit {
        gamma: gamma / t_max,
        gamma_stderr: stderr / t_max,
        r_squared: r_squared(y, fit.ss_res),
    })
}

/// Envelope fit of a resonant Rabi oscillation; `freq_guess` in Hz.
pub fn fit_damped_rabi(t: &[f64], y: &[f64], freq_guess: f64) -> Result<DampedRabiFit> {
    check_points(t, y)?;
    let t_max = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if t_max == 0.0 {
        return Err(Error::Fit("all times are zero".into()));
    }
    let ts: Vec<f64> = t.iter().map(|v| v / t_max).collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let model = |p: &[f64], t: f64, g: &mut [f64]| {
        let e = (-p[0] * t).exp();
        let (s, c) = (two_pi * p[1] * t).sin_cos();
        g[0] = 0.5 * t * e * c;
        g[1] = 0.5 * e * s * two_pi * t;
        0.5 - 0.5 * e * c
    };
    let fit = fit_curve(&ts, y, &[1.0, freq_guess * t_max], &model)?;
    Ok(DampedRabiFit {
        decay_rate: fit.params[0] / t_max,
        decay_rate_stderr: fit.stderr[0] / t_max,
        frequency: fit.params[1] / t_max,
        r_squared: r_squared(y, fit.ss_res),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = x.map(|v| 3.0 * v);
        let f = fit_linear_through_origin(&x, &y).unwrap();
        assert_eq!(f.slope, 3.0);
        assert_eq!(f.r_squared, 1.0);
        assert_eq!(f.stderr, 0.0);
    }

    #[test]
    fn zero_response_fits() {
        let f = fit_linear_through_origin(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn degenerate_inputs_fail() {
        assert!(fit_linear_through_origin(&[0.0; 3], &[1.0; 3]).is_err());
        assert!(fit_linear_through_origin(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_linear_through_origin(&[1.0, f64::NAN, 2.0], &[1.0; 3]).is_err());
        assert!(fit_exponential_saturation(&[0.0; 4], &[0.0; 4]).is_err());
    }

    #[test]
    fn slope_stderr_by_hand() {
        let x: [f64; 3] = [1.0, 2.0, 3.0];
        let y: [f64; 3] = [1.0, 2.5, 2.5];
        // slope = 13.5/14, residuals computed directly
        let slope: f64 = 13.5 / 14.0;
        let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - slope * a).powi(2)).sum();
        let f = fit_linear_through_origin(&x, &y).unwrap();
        assert!((f.slope - slope).abs() < 1e-15);
        assert!((f.stderr - (ss / 2.0 / 14.0).sqrt()).abs() < 1e-15);
        // t(0.975, 2) = 4.302653
        assert!(((f.ci95.1 - f.slope) / f.stderr - 4.302653).abs() < 1e-5);
    }

    #[test]
    fn saturation_roundtrip() {
        let gamma = 1000.0;
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 1e-4).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.5 * (1.0 - (-gamma * t).exp())).collect();
        let f = fit_exponential_saturation(&t, &y).unwrap();
        assert!((f.gamma / gamma - 1.0).abs() < 1e-3, "{f:?}");
        assert!(f.r_squared > 0.999999);
    }

    #[test]
    fn slow_saturation_roundtrip() {
        let gamma = 3.0;
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 1e-3).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.5 * (1.0 - (-gamma * t).exp())).collect();
        let f = fit_exponential_saturation(&t, &y).unwrap();
        assert!((f.gamma / gamma - 1.0).abs() < 1e-3, "{f:?}");
    }

    #[test]
    fn damped_rabi_roundtrip() {
        let (g, fr) = (2.0e4, 1.0e5);
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 1e-7).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|t| 0.5 - 0.5 * (-g * t).exp() * (2.0 * std::f64::consts::PI * fr * t).cos())
            .collect();
        let f = fit_damped_rabi(&t, &y, 0.97e5).unwrap();
        assert!((f.decay_rate / g - 1.0).abs() < 1e-4, "{f:?}");
        assert!((f.frequency / fr - 1.0).abs() < 1e-6);
    }
}
