use serde::{Deserialize, Serialize};

use crate::error::FluidError;
use crate::network::{Discipline, ValidatedSpec};

/// Fluid discipline. FIFO has no piecewise-linear fluid counterpart here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluidDiscipline {
    StaticPriority { ranks: Vec<u32> },
    Hlpps,
    WorkConserving,
}

impl FluidDiscipline {
    pub fn is_proportional(&self) -> bool {
        !matches!(self, FluidDiscipline::StaticPriority { .. })
    }
}

/// First-moment projection of a network: rates, routing and constituency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawFluidSpec")]
pub struct FluidSpec {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
    pub station_of: Vec<usize>,
    pub discipline: FluidDiscipline,
    #[serde(skip)]
    classes_at: Vec<Vec<usize>>,
}

impl FluidSpec {
    pub fn new(
        alpha: Vec<f64>,
        mu: Vec<f64>,
        routing: Vec<Vec<f64>>,
        station_of: Vec<usize>,
        discipline: FluidDiscipline,
    ) -> Self {
        let j = station_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut classes_at: Vec<Vec<usize>> = vec![Vec::new(); j];
        for (c, &s) in station_of.iter().enumerate() {
            classes_at[s].push(c);
        }
        if let FluidDiscipline::StaticPriority { ranks } = &discipline {
            for at in &mut classes_at {
                at.sort_by_key(|&c| (ranks[c], c));
            }
        }
        FluidSpec {
            alpha,
            mu,
            routing,
            station_of,
            discipline,
            classes_at,
        }
    }

    pub fn from_network(spec: &ValidatedSpec) -> Result<Self, FluidError> {
        let discipline = match spec.discipline() {
            Discipline::Fifo => return Err(FluidError::UnsupportedDiscipline("fifo")),
            Discipline::StaticPriority { ranks } => FluidDiscipline::StaticPriority { ranks: ranks.clone() },
            Discipline::Hlpps => FluidDiscipline::Hlpps,
            Discipline::WorkConserving => FluidDiscipline::WorkConserving,
        };
        Ok(FluidSpec::new(
            spec.alpha().to_vec(),
            spec.mu().to_vec(),
            spec.routing().to_vec(),
            spec.station_map().to_vec(),
            discipline,
        ))
    }

    pub fn num_classes(&self) -> usize {
        self.mu.len()
    }

    pub fn num_stations(&self) -> usize {
        self.classes_at.len()
    }

    /// Classes at `station`; in priority order for static priority.
    pub fn classes_at(&self, station: usize) -> &[usize] {
        &self.classes_at[station]
    }

    /// Net fluid rate `alpha + (P^T - I) M tdot`.
    pub fn drift(&self, tdot: &[f64]) -> Vec<f64> {
        let k = self.num_classes();
        let mut qdot = self.alpha.clone();
        for l in 0..k {
            let out = self.mu[l] * tdot[l];
            if out == 0.0 {
                continue;
            }
            qdot[l] -= out;
            for (c, &p) in self.routing[l].iter().enumerate() {
                if p != 0.0 {
                    qdot[c] += p * out;
                }
            }
        }
        qdot
    }

    /// Fluid inflow `alpha_c + sum_l P_lc mu_l tdot_l` into class `c`.
    pub fn inflow(&self, c: usize, tdot: &[f64]) -> f64 {
        self.alpha[c]
            + (0..self.num_classes())
                .map(|l| self.routing[l][c] * self.mu[l] * tdot[l])
                .sum::<f64>()
    }

    /// Workload per station, `C M^{-1} q`.
    pub fn workload(&self, q: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.num_stations()];
        for (c, &x) in q.iter().enumerate() {
            w[self.station_of[c]] += x / self.mu[c];
        }
        w
    }

    /// Capacity used per station, `C tdot`.
    pub fn usage(&self, tdot: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.num_stations()];
        for (c, &x) in tdot.iter().enumerate() {
            u[self.station_of[c]] += x;
        }
        u
    }
}

#[derive(Deserialize)]
struct RawFluidSpec {
    alpha: Vec<f64>,
    mu: Vec<f64>,
    routing: Vec<Vec<f64>>,
    station_of: Vec<usize>,
    discipline: FluidDiscipline,
}

impl From<RawFluidSpec> for FluidSpec {
    fn from(r: RawFluidSpec) -> Self {
        FluidSpec::new(r.alpha, r.mu, r.routing, r.station_of, r.discipline)
    }
}
