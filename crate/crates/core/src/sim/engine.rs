use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::state::{check_state, SimState};
use crate::error::SimError;
use crate::network::ValidatedSpec;
use crate::rng::{self, Sampler, Stream, StreamKind};

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Initial,
    Arrival,
    Departure,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Initial => "initial",
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
        }
    }
}

/// A processed event. `routed_to` is set for departures that join another
/// class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub class: usize,
    pub routed_to: Option<usize>,
}

/// When to stop a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Run until clock time `t`; the final state is at exactly `t`.
    Time(f64),
    /// Stop right after the given number of events.
    Events(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub event_cap: u64,
    /// Check every state invariant after each event.
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            event_cap: DEFAULT_EVENT_CAP,
            check_invariants: false,
        }
    }
}

/// Interval `[start, end]` during which queue lengths are constant and
/// residual times decay linearly. `event` is what started the interval.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub state: &'a SimState,
    pub start: f64,
    pub end: f64,
    pub event: Option<Event>,
    /// No event happens at `end` (the run stops there).
    pub closed: bool,
}

impl Segment<'_> {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Decay rate of `||u||` within the segment.
    pub fn u_rate(&self) -> f64 {
        self.state.u.iter().filter(|&&x| x > 0.0).count() as f64
    }

    /// Decay rate of `||v||` within the segment.
    pub fn v_rate(&self) -> f64 {
        self.state.z.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events: u64,
    pub arrivals: u64,
    pub exits: u64,
    pub end_time: f64,
    /// The event cap stopped the run before the horizon.
    pub truncated: bool,
    /// An observer stopped the run early.
    pub stopped: bool,
}

/// Event-driven simulator of the network as a piecewise-deterministic
/// Markov process.
pub struct Simulator<'a> {
    spec: &'a ValidatedSpec,
    state: SimState,
    arrival_samplers: Vec<Option<Sampler>>,
    service_samplers: Vec<Sampler>,
    arrival_streams: Vec<Stream>,
    service_streams: Vec<Stream>,
    routing_streams: Vec<Stream>,
    options: SimOptions,
    events: u64,
    arrivals: u64,
    exits: u64,
    initial_customers: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ValidatedSpec, x0: SimState, seed: u64) -> Result<Self, SimError> {
        Self::with_options(spec, x0, seed, SimOptions::default())
    }

    pub fn with_options(
        spec: &'a ValidatedSpec,
        x0: SimState,
        seed: u64,
        options: SimOptions,
    ) -> Result<Self, SimError> {
        let k = spec.num_classes();
        if x0.num_classes() != k {
            return Err(SimError::InitialState(format!(
                "state has {} classes, network has {k}",
                x0.num_classes()
            )));
        }
        check_state(spec, &x0)?;
        Ok(Simulator {
            spec,
            initial_customers: x0.total_customers(),
            state: x0,
            arrival_samplers: (0..k).map(|c| spec.arrival_distribution(c).map(Sampler::new)).collect(),
            service_samplers: (0..k).map(|c| Sampler::new(spec.service_distribution(c))).collect(),
            arrival_streams: (0..k).map(|c| rng::stream(seed, StreamKind::Arrival, c)).collect(),
            service_streams: (0..k).map(|c| rng::stream(seed, StreamKind::Service, c)).collect(),
            routing_streams: (0..k).map(|c| rng::stream(seed, StreamKind::Routing, c)).collect(),
            options,
            events: 0,
            arrivals: 0,
            exits: 0,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn into_state(self) -> SimState {
        self.state
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Next pending event as `(time, is_arrival, class)`. Ties go to
    /// arrivals first, then to the lowest class index.
    fn next_event(&self) -> Option<(f64, bool, usize)> {
        let mut best: Option<(f64, bool, usize)> = None;
        let mut consider = |dt: f64, arrival: bool, class: usize| {
            let better = match best {
                None => true,
                Some((b, b_arr, _)) => dt < b || (dt == b && arrival && !b_arr),
            };
            if better {
                best = Some((dt, arrival, class));
            }
        };
        for &c in self.spec.exogenous_classes() {
            consider(self.state.u[c], true, c);
        }
        for c in 0..self.state.num_classes() {
            let z = self.state.z[c];
            if z > 0.0 {
                consider(self.state.v[c] / z, false, c);
            }
        }
        best.map(|(dt, a, c)| (self.state.time + dt, a, c))
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.next_event().map(|(t, _, _)| t)
    }

    /// Moves the clock forward by `dt` without any event firing.
    fn decay(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        for &c in self.spec.exogenous_classes() {
            self.state.u[c] = (self.state.u[c] - dt).max(0.0);
        }
        for c in 0..self.state.num_classes() {
            let z = self.state.z[c];
            if z > 0.0 {
                self.state.v[c] = (self.state.v[c] - z * dt).max(0.0);
            }
        }
        self.state.time += dt;
    }

    /// Advances the clock to `t`, which must not pass the next event.
    pub fn advance_to(&mut self, t: f64) {
        debug_assert!(self.next_event_time().is_none_or(|n| t <= n));
        let dt = t - self.state.time;
        self.decay(dt);
        self.state.time = t.max(self.state.time);
    }

    /// Processes the next event. Returns `None` when nothing can happen.
    pub fn step(&mut self) -> Result<Option<Event>, SimError> {
        let Some((t, arrival, class)) = self.next_event() else {
            return Ok(None);
        };
        let dt = t - self.state.time;
        self.decay(dt);
        self.state.time = t;
        let event = if arrival {
            self.state.u[class] = 0.0;
            self.arrivals += 1;
            self.join(class);
            let d = self.arrival_samplers[class]
                .as_ref()
                .expect("exogenous class has an arrival sampler");
            self.state.u[class] = d.sample(&mut self.arrival_streams[class]);
            Event {
                time: t,
                kind: EventKind::Arrival,
                class,
                routed_to: None,
            }
        } else {
            self.state.v[class] = 0.0;
            self.state.queues[class].pop_front();
            if !self.state.queues[class].is_empty() {
                self.state.v[class] = self.service_samplers[class].sample(&mut self.service_streams[class]);
            }
            let routed_to = rng::draw_route(&self.spec.routing()[class], &mut self.routing_streams[class]);
            match routed_to {
                Some(next) => self.join(next),
                None => self.exits += 1,
            }
            self.state.refresh_station(self.spec, self.spec.station_of(class));
            Event {
                time: t,
                kind: EventKind::Departure,
                class,
                routed_to,
            }
        };
        self.events += 1;
        if self.options.check_invariants {
            self.check()?;
        }
        Ok(Some(event))
    }

    fn join(&mut self, class: usize) {
        let was_empty = self.state.queues[class].is_empty();
        self.state.queues[class].push_back(self.state.time);
        if was_empty {
            self.state.v[class] = self.service_samplers[class].sample(&mut self.service_streams[class]);
        }
        self.state.refresh_station(self.spec, self.spec.station_of(class));
    }

    fn check(&self) -> Result<(), SimError> {
        check_state(self.spec, &self.state)?;
        let expected = self.initial_customers as u64 + self.arrivals - self.exits;
        if self.state.total_customers() as u64 != expected {
            return Err(SimError::Invariant {
                time: self.state.time,
                what: format!(
                    "customer count {} != initial + arrivals - departures = {expected}",
                    self.state.total_customers()
                ),
            });
        }
        Ok(())
    }

    /// Runs until the horizon, handing every constant-queue interval to
    /// `observer` before the event that ends it is processed.
    pub fn run<F>(&mut self, horizon: Horizon, mut observer: F) -> Result<RunSummary, SimError>
    where
        F: FnMut(&Segment<'_>) -> ControlFlow<()>,
    {
        let start_events = self.events;
        let mut last_event: Option<Event> = None;
        let mut truncated = false;
        let mut stopped = false;
        let time_limit = match horizon {
            Horizon::Time(t) => {
                if !(t >= self.state.time) {
                    return Err(SimError::Parameter(format!("time horizon {t} is in the past")));
                }
                t
            }
            Horizon::Events(_) => f64::INFINITY,
        };
        loop {
            let done_events = self.events - start_events;
            let event_budget_left = match horizon {
                Horizon::Events(n) => done_events < n,
                Horizon::Time(_) => true,
            };
            let capped = done_events >= self.options.event_cap;
            let next = if event_budget_left && !capped {
                self.next_event_time()
            } else {
                None
            };
            let (end, fires) = match next {
                Some(t) if t <= time_limit => (t, true),
                _ if time_limit.is_finite() && !capped => (time_limit, false),
                _ => (self.state.time, false),
            };
            let seg = Segment {
                state: &self.state,
                start: self.state.time,
                end,
                event: last_event,
                closed: !fires,
            };
            if observer(&seg).is_break() {
                stopped = true;
                break;
            }
            if !fires {
                if capped && event_budget_left {
                    truncated = true;
                }
                self.advance_to(end);
                break;
            }
            last_event = self.step()?;
        }
        Ok(RunSummary {
            events: self.events - start_events,
            arrivals: self.arrivals,
            exits: self.exits,
            end_time: self.state.time,
            truncated,
            stopped,
        })
    }
}
