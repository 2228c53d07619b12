//! Dormand–Prince 5(4) embedded Runge–Kutta with PI step-size control.
//!
//! Coefficients and the controller follow Hairer, Nørsett & Wanner's DOPRI5.
//! The local error is measured in the max norm over components, so a kink
//! in a single component is not averaged away by the others.
//! The stepper is driven one accepted step at a time so that the caller can
//! inspect or modify the state between steps; after any external change to
//! `y`, call [`Dopri5::reset`] to drop the cached first stage.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus the embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub trait OdeSystem {
    type Error;
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Self::Error>;
}

#[derive(Debug)]
pub enum StepError<E> {
    /// The right-hand side failed at the start of a step.
    Rhs(E),
    /// The step size fell below the minimum.
    Underflow { t: f64, h: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    safety: f64,
    beta: f64,
    err_old: f64,
    h: Option<f64>,
    k1: Option<Vec<f64>>,
    pub stats: Stats,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, h_max: f64::INFINITY, h_min: 1e-12, safety: 0.9, beta: 0.04, err_old: 1e-4, h: None, k1: None, stats: Stats::default() }
    }

    /// Forget the cached first stage (the state was changed externally).
    pub fn reset(&mut self) {
        self.k1 = None;
    }

    /// Step size the next attempt will use, if already chosen.
    pub fn step_size(&self) -> Option<f64> {
        self.h
    }

    fn eval<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), S::Error> {
        self.stats.evaluations += 1;
        sys.rhs(t, y, dy)
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    fn initial_step<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &[f64], k1: &[f64], t_end: f64) -> Result<f64, S::Error> {
        let dim = y.len().max(1) as f64;
        let d0 = (y.iter().map(|v| (v / self.scale(*v, 0.0)).powi(2)).sum::<f64>() / dim).sqrt();
        let d1 = (y.iter().zip(k1).map(|(v, f)| (f / self.scale(*v, 0.0)).powi(2)).sum::<f64>() / dim).sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.h_max).min(t_end - t);
        let y1: Vec<f64> = y.iter().zip(k1).map(|(v, f)| v + h0 * f).collect();
        let mut k2 = vec![0.0; y.len()];
        self.eval(sys, t + h0, &y1, &mut k2)?;
        let d2 = (y.iter().zip(k1.iter().zip(&k2)).map(|(v, (a, b))| ((b - a) / self.scale(*v, 0.0)).powi(2)).sum::<f64>() / dim).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        Ok((100.0 * h0).min(h1).min(self.h_max).min(t_end - t))
    }

    /// Advances `(t, y)` by one accepted step without passing `t_end`.
    ///
    /// A right-hand-side failure inside a trial step is treated like an
    /// error-test failure and the step is retried at a quarter of the size.
    pub fn step<S: OdeSystem>(&mut self, sys: &mut S, t: &mut f64, y: &mut Vec<f64>, t_end: f64) -> Result<f64, StepError<S::Error>> {
        let dim = y.len();
        let k1 = match self.k1.take() {
            Some(k) => k,
            None => {
                let mut k = vec![0.0; dim];
                self.eval(sys, *t, y, &mut k).map_err(StepError::Rhs)?;
                k
            }
        };
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(sys, *t, y, &k1, t_end).map_err(StepError::Rhs)?,
        };

        let mut stage = vec![0.0; dim];
        let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
            (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        let mut y_new = vec![0.0; dim];
        let mut last_reject = false;
        loop {
            h = h.min(self.h_max).min(t_end - *t);
            if h < self.h_min {
                self.k1 = Some(k1);
                return Err(StepError::Underflow { t: *t, h });
            }
            let t0 = *t;
            let attempt = (|| {
                for i in 0..dim {
                    stage[i] = y[i] + h * A21 * k1[i];
                }
                self.eval(sys, t0 + C2 * h, &stage, &mut k2)?;
                for i in 0..dim {
                    stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
                }
                self.eval(sys, t0 + C3 * h, &stage, &mut k3)?;
                for i in 0..dim {
                    stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
                }
                self.eval(sys, t0 + C4 * h, &stage, &mut k4)?;
                for i in 0..dim {
                    stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
                }
                self.eval(sys, t0 + C5 * h, &stage, &mut k5)?;
                for i in 0..dim {
                    stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
                }
                self.eval(sys, t0 + h, &stage, &mut k6)?;
                for i in 0..dim {
                    y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
                }
                self.eval(sys, t0 + h, &y_new, &mut k7)
            })();
            if attempt.is_err() {
                self.stats.rejected += 1;
                h *= 0.25;
                last_reject = true;
                continue;
            }

            let mut err = 0.0f64;
            for i in 0..dim {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                err = err.max((e / self.scale(y[i], y_new[i])).abs());
            }
            if !err.is_finite() {
                self.stats.rejected += 1;
                h *= 0.25;
                last_reject = true;
                continue;
            }

            let expo = 0.2 - 0.75 * self.beta;
            let fac11 = err.powf(expo);
            if err <= 1.0 {
                let fac = (fac11 / self.err_old.powf(self.beta) / self.safety).clamp(0.1, 5.0);
                let mut h_next = h / fac;
                if last_reject {
                    h_next = h_next.min(h);
                }
                self.err_old = err.max(1e-4);
                *t += h;
                std::mem::swap(y, &mut y_new);
                self.k1 = Some(k7);
                self.h = Some(h_next);
                self.stats.accepted += 1;
                return Ok(h);
            }
            self.stats.rejected += 1;
            h /= (fac11 / self.safety).min(5.0);
            last_reject = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);
    impl OdeSystem for Decay {
        type Error = ();
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
            dy[0] = -self.0 * y[0];
            Ok(())
        }
    }

    struct Oscillator;
    impl OdeSystem for Oscillator {
        type Error = ();
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    fn integrate<S: OdeSystem>(sys: &mut S, y0: Vec<f64>, t_end: f64, tol: f64) -> (Vec<f64>, Stats) {
        let mut stepper = Dopri5::new(tol, tol);
        let (mut t, mut y) = (0.0, y0);
        while t < t_end {
            stepper.step(sys, &mut t, &mut y, t_end).ok().unwrap();
        }
        (y, stepper.stats)
    }

    #[test]
    fn exponential_decay() {
        let (y, _) = integrate(&mut Decay(0.7), vec![2.0], 5.0, 1e-9);
        assert!((y[0] - 2.0 * (-3.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let (y, stats) = integrate(&mut Oscillator, vec![1.0, 0.0], 2.0 * std::f64::consts::PI, 1e-10);
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn loose_tolerance_takes_fewer_steps() {
        let (_, tight) = integrate(&mut Oscillator, vec![1.0, 0.0], 10.0, 1e-10);
        let (_, loose) = integrate(&mut Oscillator, vec![1.0, 0.0], 10.0, 1e-4);
        assert!(loose.accepted < tight.accepted);
    }

    struct Fails;
    impl OdeSystem for Fails {
        type Error = &'static str;
        fn rhs(&mut self, _t: f64, _y: &[f64], _dy: &mut [f64]) -> Result<(), &'static str> {
            Err("boom")
        }
    }

    #[test]
    fn rhs_failure_at_start_is_reported() {
        let mut stepper = Dopri5::new(1e-6, 1e-6);
        let (mut t, mut y) = (0.0, vec![1.0]);
        assert!(matches!(stepper.step(&mut Fails, &mut t, &mut y, 1.0), Err(StepError::Rhs("boom"))));
    }
}
