use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::LyapunovError;
use crate::fluid::FluidTrajectory;

/// `w(s) = c s^p` with `c, p > 0`: strictly increasing, zero at zero and
/// unbounded, with inverse `(s / c)^(1/p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c: f64,
    pub p: f64,
}

impl Envelope {
    pub fn new(c: f64, p: f64) -> Result<Self, LyapunovError> {
        let e = Envelope { c, p };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), LyapunovError> {
        if self.c > 0.0 && self.p > 0.0 && self.c.is_finite() && self.p.is_finite() {
            Ok(())
        } else {
            Err(LyapunovError::Candidate(format!(
                "envelope needs c > 0 and p > 0, got c = {}, p = {}",
                self.c, self.p
            )))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.c * s.powf(self.p)
    }

    pub fn inverse(&self, s: f64) -> f64 {
        (s / self.c).powf(1.0 / self.p)
    }

    /// `int_0^h w(a + b r) dr` for an affine argument that stays
    /// nonnegative. Sixteen Gauss-Legendre nodes integrate polynomials up to
    /// degree 31 exactly, so integer powers are handled without error.
    pub fn integrate_affine(&self, a: f64, b: f64, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        let half = 0.5 * h;
        GAUSS16
            .iter()
            .map(|&(x, w)| {
                let r = half * (x + 1.0);
                w * self.eval((a + b * r).max(0.0))
            })
            .sum::<f64>()
            * half
    }
}

const GAUSS16: [(f64, f64); 16] = [
    (-0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
    (-0.944_575_023_073_232_6, 0.062_253_523_938_647_9),
    (-0.865_631_202_387_831_7, 0.095_158_511_682_492_8),
    (-0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (-0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (-0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (-0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (-0.095_012_509_837_637_4, 0.189_450_610_455_068_5),
    (0.095_012_509_837_637_4, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_8),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_9),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
];

/// Degree-two candidate families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CandidateForm {
    /// `(xi . q)^2` with `xi > 0`.
    WeightedLinearSquared { xi: Vec<f64> },
    /// `q^T A q` with `A` symmetric positive definite.
    WeightedQuadratic { a: Vec<Vec<f64>> },
    /// `(max_i xi_i . q)^2`.
    MaxLinearSquared { xi: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCandidate {
    #[serde(flatten)]
    pub form: CandidateForm,
    pub w1: Envelope,
    pub w2: Envelope,
    pub w3: Envelope,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LyapunovCandidate {
    pub fn new(form: CandidateForm, w1: Envelope, w2: Envelope, w3: Envelope) -> Result<Self, LyapunovError> {
        let v = LyapunovCandidate { form, w1, w2, w3 };
        v.validate()?;
        Ok(v)
    }

    /// `(xi . q)^2` with the tight envelopes `xi_min^2 s^2`, `xi_max^2 s^2`
    /// on the nonnegative orthant (`|q|_1` norm).
    pub fn linear_squared(xi: Vec<f64>, w3: Envelope) -> Result<Self, LyapunovError> {
        let lo = xi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xi.iter().copied().fold(0.0, f64::max);
        if !(lo > 0.0) {
            return Err(LyapunovError::Candidate("weights must be positive".into()));
        }
        Self::new(
            CandidateForm::WeightedLinearSquared { xi },
            Envelope::new(lo * lo, 2.0)?,
            Envelope::new(hi * hi, 2.0)?,
            w3,
        )
    }

    pub fn num_classes(&self) -> usize {
        match &self.form {
            CandidateForm::WeightedLinearSquared { xi } => xi.len(),
            CandidateForm::WeightedQuadratic { a } => a.len(),
            CandidateForm::MaxLinearSquared { xi } => xi.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<(), LyapunovError> {
        for w in [&self.w1, &self.w2, &self.w3] {
            w.validate()?;
        }
        let bad = |m: &str| Err(LyapunovError::Candidate(m.to_string()));
        match &self.form {
            CandidateForm::WeightedLinearSquared { xi } => {
                if xi.is_empty() || xi.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return bad("weights must be positive and finite");
                }
            }
            CandidateForm::WeightedQuadratic { a } => {
                let k = a.len();
                if k == 0 || a.iter().any(|r| r.len() != k) {
                    return bad("matrix must be square and nonempty");
                }
                for i in 0..k {
                    for j in 0..k {
                        if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                            return bad("matrix must be symmetric");
                        }
                    }
                }
                let m = DMatrix::from_fn(k, k, |i, j| a[i][j]);
                if m.cholesky().is_none() {
                    return bad("matrix must be positive definite");
                }
            }
            CandidateForm::MaxLinearSquared { xi } => {
                let k = xi.first().map_or(0, Vec::len);
                if k == 0 || xi.iter().any(|r| r.len() != k) {
                    return bad("weight vectors must share a nonzero length");
                }
                if xi.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return bad("weights must be nonnegative and finite");
                }
                // positive off the origin on the orthant iff each class is covered
                if (0..k).any(|c| xi.iter().all(|r| r[c] == 0.0)) {
                    return bad("every class needs a positive weight in some vector");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        match &self.form {
            CandidateForm::WeightedLinearSquared { xi } => dot(xi, q).powi(2),
            CandidateForm::WeightedQuadratic { a } => {
                let m = DMatrix::from_fn(a.len(), a.len(), |i, j| a[i][j]);
                let v = DVector::from_column_slice(q);
                v.dot(&(&m * &v))
            }
            CandidateForm::MaxLinearSquared { xi } => {
                xi.iter().map(|r| dot(r, q)).fold(f64::NEG_INFINITY, f64::max).powi(2)
            }
        }
    }

    /// `w2^{-1}(V(q))`, the queue part of the Foster function.
    pub fn level(&self, q: &[f64]) -> f64 {
        self.w2.inverse(self.eval(q))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LyapunovError> {
        let v: LyapunovCandidate = serde_json::from_str(text).map_err(|e| LyapunovError::Candidate(e.to_string()))?;
        v.validate()?;
        Ok(v)
    }
}

fn l1(q: &[f64]) -> f64 {
    q.iter().map(|x| x.abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub points: usize,
    /// `min (V(q) - w1(|q|))`.
    pub lower_margin: f64,
    /// `min (w2(|q|) - V(q))`.
    pub upper_margin: f64,
    /// Grid point with the smallest margin, if any bound fails.
    pub worst_point: Option<Vec<f64>>,
    pub passed: bool,
}

/// Checks `w1(|q|) <= V(q) <= w2(|q|)` at each grid point, up to rounding.
pub fn sandwich_check(v: &LyapunovCandidate, grid: &[Vec<f64>]) -> Result<SandwichReport, LyapunovError> {
    if grid.is_empty() {
        return Err(LyapunovError::Parameter("empty grid".into()));
    }
    let k = v.num_classes();
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    let mut worst: Option<(f64, Vec<f64>)> = None;
    let mut passed = true;
    for q in grid {
        if q.len() != k || q.iter().any(|&x| !(x >= 0.0)) {
            return Err(LyapunovError::Parameter(format!("bad grid point {q:?}")));
        }
        let s = l1(q);
        let val = v.eval(q);
        let (lo, hi) = (val - v.w1.eval(s), v.w2.eval(s) - val);
        lower = lower.min(lo);
        upper = upper.min(hi);
        let slack = 1e-12 * (1.0 + val.abs());
        let m = lo.min(hi);
        if m < -slack {
            passed = false;
            if worst.as_ref().is_none_or(|(w, _)| m < *w) {
                worst = Some((m, q.clone()));
            }
        }
    }
    Ok(SandwichReport {
        points: grid.len(),
        lower_margin: lower,
        upper_margin: upper,
        worst_point: worst.map(|(_, q)| q),
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCheckReport {
    pub breakpoints: usize,
    /// `min over s < t of -int_s^t w3 - (V(Q(t)) - V(Q(s)))`.
    pub worst_slack: f64,
    /// Breakpoint times `(s, t)` attaining the worst slack.
    pub worst_pair: Option<(f64, f64)>,
    pub passed: bool,
}

/// Checks `V(Q(t)) - V(Q(s)) <= -int_s^t w3(|Q(r)|) dr + tol` for every pair
/// of breakpoints `s < t`.
///
/// With `D(t) = V(Q(t)) + int_0^t w3`, the condition is `D(t) - D(s) <= tol`,
/// so a running minimum of `D` finds the worst pair in one pass.
pub fn fluid_drift_check(v: &LyapunovCandidate, w3: &Envelope, traj: &FluidTrajectory, tol: f64) -> DriftCheckReport {
    let mut integral = 0.0;
    let d0 = v.eval(traj.q0());
    let mut min_d = d0;
    let mut min_at = 0.0;
    let mut worst = f64::INFINITY;
    let mut worst_pair = None;
    for i in 0..traj.num_segments() {
        let (t0, t1) = (traj.times[i], traj.times[i + 1]);
        let (a, b) = (l1(&traj.q[i]), l1(&traj.q[i + 1]));
        integral += w3.integrate_affine(a, (b - a) / (t1 - t0), t1 - t0);
        let d = v.eval(&traj.q[i + 1]) + integral;
        let slack = min_d - d;
        if slack < worst {
            worst = slack;
            worst_pair = Some((min_at, t1));
        }
        if d < min_d {
            min_d = d;
            min_at = t1;
        }
    }
    if traj.num_segments() == 0 {
        worst = 0.0;
    }
    DriftCheckReport {
        breakpoints: traj.times.len(),
        worst_slack: worst,
        worst_pair,
        passed: worst >= -tol,
    }
}
