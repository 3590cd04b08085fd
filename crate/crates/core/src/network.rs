//! Static description of a multiclass queueing network.
//!
//! A [`NetworkSpec`] carries the constituency matrix, first moments, routing
//! matrix and primitive distributions. [`validate_spec`] turns it into an
//! immutable [`ValidatedSpec`] from which the first-moment quantities
//! (effective arrival rates, traffic intensities) are derived.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{SpecError, SpecViolation};

/// Relative tolerance used when comparing a distribution mean against the
/// declared rate.
const MEAN_RTOL: f64 = 1e-9;

/// Primitive interarrival or service time distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Distribution {
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    Deterministic { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl Distribution {
    pub fn exponential_with_mean(mean: f64) -> Self {
        Distribution::Exponential { rate: 1.0 / mean }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Gamma { shape, scale } => shape * scale,
            Distribution::Deterministic { value } => value,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    /// Arbitrarily large values occur with positive probability.
    pub fn is_unbounded(&self) -> bool {
        matches!(self, Distribution::Exponential { .. } | Distribution::Gamma { .. })
    }

    /// Some convolution power has an absolutely continuous component.
    pub fn is_spread_out(&self) -> bool {
        matches!(self, Distribution::Exponential { .. } | Distribution::Gamma { .. })
    }

    pub fn family(&self) -> &'static str {
        match self {
            Distribution::Exponential { .. } => "exponential",
            Distribution::Gamma { .. } => "gamma",
            Distribution::Deterministic { .. } => "deterministic",
            Distribution::Uniform { .. } => "uniform",
        }
    }

    fn parameter_problem(&self) -> Option<String> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            Distribution::Exponential { rate } if !ok(rate) => {
                Some(format!("exponential rate must be positive and finite, got {rate}"))
            }
            Distribution::Gamma { shape, scale } if !ok(shape) || !ok(scale) => Some(format!(
                "gamma shape and scale must be positive and finite, got ({shape}, {scale})"
            )),
            Distribution::Deterministic { value } if !ok(value) => {
                Some(format!("deterministic value must be positive and finite, got {value}"))
            }
            Distribution::Uniform { low, high }
                if !(low.is_finite() && high.is_finite() && low >= 0.0 && high > low) =>
            {
                Some(format!(
                    "uniform bounds must satisfy 0 <= low < high, got ({low}, {high})"
                ))
            }
            _ => None,
        }
    }
}

/// Service discipline shared by every station of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discipline {
    /// Station-wide first-in-first-out.
    Fifo,
    /// Preemptive-resume static priority. Lower rank is served first.
    StaticPriority { ranks: Vec<u32> },
    /// Head-of-the-line proportional processor sharing.
    Hlpps,
    /// A work-conserving discipline; the proportional split is used.
    WorkConserving,
}

impl Discipline {
    pub fn name(&self) -> &'static str {
        match self {
            Discipline::Fifo => "fifo",
            Discipline::StaticPriority { .. } => "static_priority",
            Discipline::Hlpps => "hlpps",
            Discipline::WorkConserving => "work_conserving",
        }
    }
}

/// Raw network description. Use [`validate_spec`] before handing it to the
/// simulator or the fluid integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `J x K` 0/1 matrix; entry `(j, k)` is 1 iff class `k` is served at station `j`.
    pub constituency: Vec<Vec<u8>>,
    pub arrival_rates: Vec<f64>,
    pub service_rates: Vec<f64>,
    /// `K x K` substochastic routing matrix, row `k` is the routing law after class `k` service.
    pub routing: Vec<Vec<f64>>,
    pub discipline: Discipline,
    /// `None` encodes a null exogenous arrival stream.
    pub arrival_distributions: Vec<Option<Distribution>>,
    pub service_distributions: Vec<Distribution>,
}

impl NetworkSpec {
    /// Builds a spec with exponential primitives matching the given rates.
    pub fn exponential(
        station_of: &[usize],
        arrival_rates: Vec<f64>,
        service_rates: Vec<f64>,
        routing: Vec<Vec<f64>>,
        discipline: Discipline,
    ) -> Self {
        let num_stations = station_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut constituency = vec![vec![0u8; station_of.len()]; num_stations];
        for (k, &j) in station_of.iter().enumerate() {
            constituency[j][k] = 1;
        }
        let arrival_distributions = arrival_rates
            .iter()
            .map(|&a| (a > 0.0).then_some(Distribution::Exponential { rate: a }))
            .collect();
        let service_distributions = service_rates
            .iter()
            .map(|&m| Distribution::Exponential { rate: m })
            .collect();
        NetworkSpec {
            constituency,
            arrival_rates,
            service_rates,
            routing,
            discipline,
            arrival_distributions,
            service_distributions,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.service_rates.len()
    }

    pub fn num_stations(&self) -> usize {
        self.constituency.len()
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// A network description that passed structural validation. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    raw: NetworkSpec,
    station_of: Vec<usize>,
    classes_at: Vec<Vec<usize>>,
    exogenous: Vec<usize>,
    warnings: Vec<Finding>,
}

impl ValidatedSpec {
    pub fn raw(&self) -> &NetworkSpec {
        &self.raw
    }

    pub fn num_classes(&self) -> usize {
        self.raw.num_classes()
    }

    pub fn num_stations(&self) -> usize {
        self.raw.num_stations()
    }

    pub fn station_of(&self, class: usize) -> usize {
        self.station_of[class]
    }

    pub fn station_map(&self) -> &[usize] {
        &self.station_of
    }

    pub fn classes_at(&self, station: usize) -> &[usize] {
        &self.classes_at[station]
    }

    /// Classes with a non-null exogenous arrival stream, in index order.
    pub fn exogenous_classes(&self) -> &[usize] {
        &self.exogenous
    }

    pub fn alpha(&self) -> &[f64] {
        &self.raw.arrival_rates
    }

    pub fn mu(&self) -> &[f64] {
        &self.raw.service_rates
    }

    pub fn routing(&self) -> &[Vec<f64>] {
        &self.raw.routing
    }

    pub fn discipline(&self) -> &Discipline {
        &self.raw.discipline
    }

    pub fn warnings(&self) -> &[Finding] {
        &self.warnings
    }

    pub fn arrival_distribution(&self, class: usize) -> Option<&Distribution> {
        self.raw.arrival_distributions[class].as_ref()
    }

    pub fn service_distribution(&self, class: usize) -> &Distribution {
        &self.raw.service_distributions[class]
    }

    /// Priority rank of `class`, if the discipline is static priority.
    pub fn rank(&self, class: usize) -> Option<u32> {
        match &self.raw.discipline {
            Discipline::StaticPriority { ranks } => Some(ranks[class]),
            _ => None,
        }
    }
}

/// Checks structural invariants and the distributional assumptions.
///
/// Structural problems are errors. Bounded or non-spread-out interarrival
/// distributions only produce warnings.
pub fn validate_spec(raw: NetworkSpec) -> Result<ValidatedSpec, SpecError> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    let k = raw.num_classes();
    let j = raw.num_stations();

    if k == 0 {
        errors.push("network has no classes".to_string());
    }
    if j == 0 {
        errors.push("network has no stations".to_string());
    }
    if raw.arrival_rates.len() != k {
        errors.push(format!(
            "arrival_rates has length {}, expected {k}",
            raw.arrival_rates.len()
        ));
    }
    if raw.arrival_distributions.len() != k || raw.service_distributions.len() != k {
        errors.push(format!("distribution lists must have length {k}"));
    }
    if raw.routing.len() != k || raw.routing.iter().any(|row| row.len() != k) {
        errors.push(format!("routing must be a {k}x{k} matrix"));
    }
    if raw.constituency.iter().any(|row| row.len() != k) {
        errors.push(format!("constituency rows must have length {k}"));
    }
    if !errors.is_empty() {
        return Err(SpecError::Invalid(to_violations(errors)));
    }

    let mut station_of = vec![usize::MAX; k];
    for class in 0..k {
        let ones: Vec<usize> = (0..j).filter(|&s| raw.constituency[s][class] == 1).collect();
        if raw.constituency.iter().any(|row| row[class] > 1) {
            errors.push(format!("constituency column {class} has entries other than 0/1"));
        }
        match ones.as_slice() {
            [s] => station_of[class] = *s,
            [] => errors.push(format!("constituency column {class} has no 1 (class served nowhere)")),
            _ => errors.push(format!(
                "constituency column {class} has {} ones (class served at several stations)",
                ones.len()
            )),
        }
    }

    for (class, &a) in raw.arrival_rates.iter().enumerate() {
        if !a.is_finite() || a < 0.0 {
            errors.push(format!("negative or non-finite arrival rate {a} for class {class}"));
        }
    }
    for (class, &m) in raw.service_rates.iter().enumerate() {
        if !m.is_finite() || m <= 0.0 {
            errors.push(format!(
                "service rate {m} for class {class} must be positive and finite"
            ));
        }
    }

    let mut routing_ok = true;
    for (class, row) in raw.routing.iter().enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            errors.push(format!("routing row {class} has entries outside [0, 1]"));
            routing_ok = false;
        }
        let sum: f64 = row.iter().sum();
        if sum > 1.0 + 1e-12 {
            errors.push(format!("routing row {class} sums to {sum} > 1"));
            routing_ok = false;
        }
    }
    if routing_ok {
        match spectral_radius(&raw.routing) {
            Ok(r) if r >= 1.0 - 1e-12 => errors.push(format!("spectral radius {r:.6} >= 1 for routing matrix")),
            Ok(_) => {}
            Err(e) => errors.push(e.to_string()),
        }
    }

    for class in 0..k {
        let alpha = raw.arrival_rates[class];
        match (&raw.arrival_distributions[class], alpha > 0.0) {
            (None, false) => {}
            (None, true) => errors.push(format!(
                "class {class} has arrival rate {alpha} but no arrival distribution"
            )),
            (Some(_), false) => errors.push(format!(
                "class {class} has an arrival distribution but zero arrival rate"
            )),
            (Some(d), true) => {
                if let Some(p) = d.parameter_problem() {
                    errors.push(format!("class {class} arrival: {p}"));
                } else {
                    check_mean(&mut errors, d, alpha, class, "interarrival");
                    if !d.is_unbounded() || !d.is_spread_out() {
                        warnings.push(Finding {
                            severity: Severity::Warning,
                            message: format!(
                                "interarrival assumption violated: class {class} interarrival distribution ({}) is not unbounded and spread out",
                                d.family()
                            ),
                        });
                    }
                }
            }
        }
        let d = &raw.service_distributions[class];
        if let Some(p) = d.parameter_problem() {
            errors.push(format!("class {class} service: {p}"));
        } else if raw.service_rates[class] > 0.0 {
            check_mean(&mut errors, d, raw.service_rates[class], class, "service");
        }
    }

    if let Discipline::StaticPriority { ranks } = &raw.discipline {
        if ranks.len() != k {
            errors.push(format!("priority ranks has length {}, expected {k}", ranks.len()));
        } else {
            for s in 0..j {
                let mut at: Vec<u32> = (0..k)
                    .filter(|&c| station_of.get(c) == Some(&s))
                    .map(|c| ranks[c])
                    .collect();
                at.sort_unstable();
                if at.windows(2).any(|w| w[0] == w[1]) {
                    errors.push(format!("tied priority ranks at station {s}"));
                }
            }
        }
    }

    for s in 0..j {
        if !station_of.contains(&s) {
            warnings.push(Finding {
                severity: Severity::Warning,
                message: format!("station {s} serves no class"),
            });
        }
    }

    if !errors.is_empty() {
        return Err(SpecError::Invalid(to_violations(errors)));
    }

    let classes_at = (0..j)
        .map(|s| (0..k).filter(|&c| station_of[c] == s).collect())
        .collect();
    let exogenous = (0..k).filter(|&c| raw.arrival_rates[c] > 0.0).collect();
    Ok(ValidatedSpec {
        raw,
        station_of,
        classes_at,
        exogenous,
        warnings,
    })
}

fn check_mean(errors: &mut Vec<String>, d: &Distribution, rate: f64, class: usize, what: &str) {
    let expected = 1.0 / rate;
    let mean = d.mean();
    if (mean - expected).abs() > MEAN_RTOL * expected {
        errors.push(format!(
            "class {class} {what} distribution mean {mean} does not match 1/rate = {expected}"
        ));
    }
}

fn to_violations(messages: Vec<String>) -> Vec<SpecViolation> {
    messages.into_iter().map(SpecViolation).collect()
}

/// Effective arrival rates, the solution of `lambda = alpha + P^T lambda`.
pub fn effective_arrival_rates(spec: &ValidatedSpec) -> Vec<f64> {
    let k = spec.num_classes();
    let p = DMatrix::from_fn(k, k, |r, c| spec.routing()[r][c]);
    let a = DMatrix::identity(k, k) - p.transpose();
    let rhs = DVector::from_column_slice(spec.alpha());
    let lambda = a.lu().solve(&rhs).expect("I - P^T is invertible for a validated spec");
    // clamp rounding noise, lambda >= alpha >= 0 holds exactly in exact arithmetic
    lambda.iter().zip(spec.alpha()).map(|(&l, &a)| l.max(a)).collect()
}

/// Per-station load `rho_j = sum_{k in C(j)} lambda_k / mu_k`.
pub fn traffic_intensity(spec: &ValidatedSpec) -> Vec<f64> {
    let lambda = effective_arrival_rates(spec);
    (0..spec.num_stations())
        .map(|s| spec.classes_at(s).iter().map(|&c| lambda[c] / spec.mu()[c]).sum())
        .collect()
}

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &[Vec<f64>]) -> Result<f64, SpecError> {
    let n = m.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mat = DMatrix::from_fn(n, n, |r, c| m[r][c].abs());
    match nalgebra::linalg::Schur::try_new(mat.clone(), SCHUR_EPS, SCHUR_MAX_ITER) {
        Some(schur) => Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)),
        None => Err(SpecError::SpectralRadius {
            best_estimate: gelfand_estimate(&mat),
        }),
    }
}

/// `||A^n||^(1/n)` for a moderately large power, used only as a fallback
/// diagnostic when the Schur iteration fails.
fn gelfand_estimate(mat: &DMatrix<f64>) -> f64 {
    let mut power = mat.clone();
    let mut log_scale = 0.0;
    let steps = 64;
    for _ in 1..steps {
        power = &power * mat;
        let norm = power.abs().max();
        if norm == 0.0 {
            return 0.0;
        }
        log_scale += norm.ln();
        power /= norm;
    }
    (log_scale / steps as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn mm1_raw() -> NetworkSpec {
        NetworkSpec::exponential(&[0], vec![0.5], vec![1.0], vec![vec![0.0]], Discipline::Fifo)
    }

    #[test]
    fn mm1_is_valid() {
        let spec = validate_spec(mm1_raw()).unwrap();
        assert!(spec.warnings().is_empty());
        assert_eq!(spec.exogenous_classes(), &[0]);
    }

    #[test]
    fn identity_routing_rejected() {
        let raw = NetworkSpec::exponential(
            &[0, 1],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            Discipline::Fifo,
        );
        let err = validate_spec(raw).unwrap_err();
        assert!(err.to_string().contains("spectral radius"), "{err}");
    }

    #[test]
    fn deterministic_arrivals_warn() {
        let mut raw = NetworkSpec::exponential(
            &[0, 1],
            vec![0.5, 0.0],
            vec![1.0, 1.0],
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            Discipline::Fifo,
        );
        raw.arrival_distributions[0] = Some(Distribution::Deterministic { value: 2.0 });
        let spec = validate_spec(raw).unwrap();
        assert_eq!(spec.warnings().len(), 1);
        assert!(spec.warnings()[0].message.contains("interarrival assumption violated"));
    }

    #[test]
    fn structural_errors_are_reported() {
        let mut raw = mm1_raw();
        raw.constituency = vec![vec![0]];
        assert!(validate_spec(raw).is_err());

        let mut raw = NetworkSpec::exponential(
            &[0, 0],
            vec![0.5, 0.0],
            vec![1.0, 1.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            Discipline::Fifo,
        );
        raw.constituency = vec![vec![1, 1], vec![1, 0]];
        let err = validate_spec(raw).unwrap_err().to_string();
        assert!(err.contains("several stations"), "{err}");

        let mut raw = mm1_raw();
        raw.arrival_rates = vec![-1.0];
        assert!(validate_spec(raw).is_err());

        let raw = NetworkSpec::exponential(
            &[0, 1],
            vec![0.5, 0.0],
            vec![1.0, 1.0],
            vec![vec![0.0, 0.7], vec![0.6, 0.5]],
            Discipline::Fifo,
        );
        let err = validate_spec(raw).unwrap_err().to_string();
        assert!(err.contains("sums to"), "{err}");
    }

    #[test]
    fn mismatched_mean_rejected() {
        let mut raw = mm1_raw();
        raw.service_distributions[0] = Distribution::Deterministic { value: 2.0 };
        assert!(validate_spec(raw).is_err());
    }

    #[test]
    fn tied_priority_ranks_rejected() {
        let raw = NetworkSpec::exponential(
            &[0, 0],
            vec![0.2, 0.2],
            vec![1.0, 1.0],
            vec![vec![0.0; 2]; 2],
            Discipline::StaticPriority { ranks: vec![1, 1] },
        );
        assert!(validate_spec(raw).is_err());
    }

    #[test]
    fn effective_rates_examples() {
        let spec = validate_spec(mm1_raw()).unwrap();
        assert_eq!(effective_arrival_rates(&spec), vec![0.5]);

        let tandem = presets::tandem();
        let lambda = effective_arrival_rates(&tandem);
        assert!((lambda[0] - 0.5).abs() < 1e-12 && (lambda[1] - 0.5).abs() < 1e-12);

        let rs = presets::rybko_stolyar_unstable();
        for l in effective_arrival_rates(&rs) {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn traffic_intensity_examples() {
        let spec = validate_spec(mm1_raw()).unwrap();
        assert_eq!(traffic_intensity(&spec), vec![0.5]);
        let rs = presets::rybko_stolyar_unstable();
        for r in traffic_intensity(&rs) {
            assert!((r - 0.7).abs() < 1e-12);
        }
        let mut raw = mm1_raw();
        raw.arrival_rates = vec![0.0];
        raw.arrival_distributions = vec![None];
        let spec = validate_spec(raw).unwrap();
        assert_eq!(traffic_intensity(&spec), vec![0.0]);
    }

    #[test]
    fn spectral_radius_examples() {
        let tandem = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        assert!(spectral_radius(&tandem).unwrap().abs() < 1e-12);
        let half = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        assert!((spectral_radius(&half).unwrap() - 0.5).abs() < 1e-12);
        // eigenvalues +-0.5 from lambda^2 - 0.25 = 0
        let swap = vec![vec![0.0, 0.5], vec![0.5, 0.0]];
        assert!((spectral_radius(&swap).unwrap() - 0.5).abs() < 1e-12);
        // periodic cycle of length 3 with gain 0.9 per hop: radius 0.9
        let cycle = vec![vec![0.0, 0.9, 0.0], vec![0.0, 0.0, 0.9], vec![0.9, 0.0, 0.0]];
        assert!((spectral_radius(&cycle).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn validation_is_idempotent() {
        for spec in presets::all() {
            let again = validate_spec(spec.raw().clone()).unwrap();
            assert_eq!(again.warnings(), spec.warnings());
            assert_eq!(again, spec);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn substochastic(k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
            proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, k), k).prop_map(move |rows| {
                rows.into_iter()
                    .map(|row| {
                        let s: f64 = row.iter().sum::<f64>() + 0.25;
                        row.into_iter().map(|x| x / s).collect()
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn balance_holds(
                routing in substochastic(4),
                alpha in proptest::collection::vec(0.0f64..2.0, 4),
                beta in 0.1f64..5.0,
            ) {
                let raw = NetworkSpec::exponential(
                    &[0, 1, 0, 1], alpha.clone(), vec![1.0, 2.0, 3.0, 4.0], routing.clone(), Discipline::Hlpps);
                let spec = validate_spec(raw).unwrap();
                let lambda = effective_arrival_rates(&spec);
                for k in 0..4 {
                    let inflow: f64 = (0..4).map(|l| routing[l][k] * lambda[l]).sum();
                    prop_assert!((lambda[k] - alpha[k] - inflow).abs() < 1e-10);
                    prop_assert!(lambda[k] >= alpha[k]);
                }
                let rho = traffic_intensity(&spec);
                let scaled_alpha: Vec<f64> = alpha.iter().map(|a| a * beta).collect();
                let raw2 = NetworkSpec::exponential(
                    &[0, 1, 0, 1], scaled_alpha, vec![1.0, 2.0, 3.0, 4.0], routing, Discipline::Hlpps);
                let rho2 = traffic_intensity(&validate_spec(raw2).unwrap());
                for (a, b) in rho.iter().zip(&rho2) {
                    prop_assert!((a * beta - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }
}
