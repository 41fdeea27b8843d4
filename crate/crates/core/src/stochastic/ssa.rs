//! Direct-method simulation of the network SIS chain.

use super::{check_positive, Event, SimOutcome, StochasticError};
use crate::meanfield::{Compartment, RateModel};
use crate::rng::SimRng;

#[derive(Clone, Debug)]
pub struct SsaOptions {
    pub t_cap: f64,
    pub record_events: bool,
}

/// Simulator for one rate model, reusable across runs.
///
/// Node `i` recovers at `δ_i` while infected and gets infected at
/// `Σ_j β_ij X_j` while susceptible. After each event only the flipped node
/// and the nodes it can infect have their rates recomputed (exactly, not by
/// accumulation) and the total is re-summed, so there is no drift.
#[derive(Clone, Debug)]
pub struct NetworkSsa<'a> {
    rates: &'a RateModel,
    /// `k` with `β_kj > 0`, for each `j`.
    outgoing: Vec<Vec<usize>>,
}

impl<'a> NetworkSsa<'a> {
    pub fn new(rates: &'a RateModel) -> Self {
        let n = rates.n();
        let mut outgoing = vec![Vec::new(); n];
        for k in 0..n {
            for &(j, _) in rates.incoming(k) {
                outgoing[j].push(k);
            }
        }
        Self { rates, outgoing }
    }

    pub fn n(&self) -> usize {
        self.rates.n()
    }

    pub fn run(&self, x0: &[bool], seed: u64, opts: &SsaOptions) -> SimOutcome {
        self.run_sampled(x0, seed, opts, &[], &mut Vec::new())
    }

    /// As [`run`](Self::run), also pushing the configuration at each of the
    /// ascending `sample_times` into `snapshots`.
    pub fn run_sampled(
        &self,
        x0: &[bool],
        seed: u64,
        opts: &SsaOptions,
        sample_times: &[f64],
        snapshots: &mut Vec<Vec<bool>>,
    ) -> SimOutcome {
        let n = self.n();
        let mut rng = SimRng::new(seed);
        let mut state = x0.to_vec();
        let mut infected = state.iter().filter(|&&x| x).count();
        let as_f64 =
            |s: &[bool]| -> Vec<f64> { s.iter().map(|&x| f64::from(u8::from(x))).collect() };
        let mut indicator = as_f64(&state);
        let mut rate: Vec<f64> = (0..n)
            .map(|i| self.node_rate(i, &state, &indicator))
            .collect();

        let mut events = Vec::new();
        let mut event_count = 0;
        let mut t = 0.0;
        let mut next_sample = 0;
        let mut absorption_time = None;
        let mut censored = false;

        loop {
            if infected == 0 {
                absorption_time = Some(t);
                break;
            }
            let total: f64 = rate.iter().sum();
            assert!(total > 0.0, "infected nodes present but total rate is zero");
            let t_new = t + rng.exponential(total);
            while next_sample < sample_times.len() && sample_times[next_sample] < t_new {
                snapshots.push(state.clone());
                next_sample += 1;
            }
            if t_new > opts.t_cap {
                censored = true;
                break;
            }
            let target = rng.open_unit() * total;
            let mut acc = 0.0;
            let mut node = None;
            for (i, &r) in rate.iter().enumerate() {
                if r > 0.0 {
                    acc += r;
                    node = Some(i);
                    if target < acc {
                        break;
                    }
                }
            }
            let node = node.expect("positive total rate has a positive entry");
            t = t_new;
            let from = if state[node] {
                Compartment::I
            } else {
                Compartment::S
            };
            state[node] = !state[node];
            indicator[node] = f64::from(u8::from(state[node]));
            if state[node] {
                infected += 1;
            } else {
                infected -= 1;
            }
            rate[node] = self.node_rate(node, &state, &indicator);
            for &k in &self.outgoing[node] {
                rate[k] = self.node_rate(k, &state, &indicator);
            }
            event_count += 1;
            if opts.record_events {
                events.push(Event {
                    time: t,
                    node,
                    from,
                    to: if state[node] {
                        Compartment::I
                    } else {
                        Compartment::S
                    },
                });
            }
        }
        while next_sample < sample_times.len() {
            snapshots.push(state.clone());
            next_sample += 1;
        }
        SimOutcome {
            events,
            event_count,
            absorption_time,
            censored,
            final_state: state
                .iter()
                .map(|&x| if x { Compartment::I } else { Compartment::S })
                .collect(),
            seed,
        }
    }

    fn node_rate(&self, i: usize, state: &[bool], indicator: &[f64]) -> f64 {
        if state[i] {
            self.rates.delta()[i]
        } else {
            self.rates.pressure(i, indicator)
        }
    }
}

pub(crate) fn initial_infected(x0: &[Compartment], n: usize) -> Result<Vec<bool>, StochasticError> {
    if x0.len() != n {
        return Err(StochasticError::Dimension {
            what: "initial state".into(),
            expected: n,
            got: x0.len(),
        });
    }
    x0.iter()
        .enumerate()
        .map(|(node, &c)| match c {
            Compartment::S => Ok(false),
            Compartment::I => Ok(true),
            state => Err(StochasticError::BadInitialState { node, state }),
        })
        .collect()
}

/// One run of the network SIS chain from `x0` until extinction or `t_cap`.
pub fn ssa_network_sis(
    rates: &RateModel,
    x0: &[Compartment],
    seed: u64,
    opts: &SsaOptions,
) -> Result<SimOutcome, StochasticError> {
    check_positive("t_cap", opts.t_cap)?;
    let x = initial_infected(x0, rates.n())?;
    Ok(NetworkSsa::new(rates).run(&x, seed, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, GraphKind};
    use Compartment::{I, S};

    fn opts() -> SsaOptions {
        SsaOptions {
            t_cap: 1e6,
            record_events: true,
        }
    }

    #[test]
    fn healthy_start_absorbs_immediately() {
        let g = Graph::generate(&GraphKind::Complete, 4).unwrap();
        let r = RateModel::homogeneous(&g, 1.0, 1.0).unwrap();
        let out = ssa_network_sis(&r, &[S; 4], 1, &opts()).unwrap();
        assert_eq!(out.absorption_time, Some(0.0));
        assert_eq!(out.event_count, 0);
    }

    #[test]
    fn events_are_increasing_and_consistent() {
        let g = Graph::generate(&GraphKind::Complete, 6).unwrap();
        let r = RateModel::homogeneous(&g, 0.3, 1.0).unwrap();
        let out = ssa_network_sis(&r, &[I, S, S, S, S, S], 42, &opts()).unwrap();
        assert!(!out.censored);
        assert!(out.events.windows(2).all(|w| w[1].time > w[0].time));
        assert!(out.final_state.iter().all(|&c| c == S));
        assert_eq!(out.absorption_time, Some(out.events.last().unwrap().time));
        // replaying the log reproduces the end state
        let mut st = [true, false, false, false, false, false];
        for e in &out.events {
            assert_eq!(st[e.node], e.from == I);
            st[e.node] = e.to == I;
        }
        assert!(st.iter().all(|&x| !x));
    }

    #[test]
    fn reproducible() {
        let g = Graph::generate(&GraphKind::Star, 5).unwrap();
        let r = RateModel::homogeneous(&g, 0.8, 1.0).unwrap();
        let a = ssa_network_sis(&r, &[I, S, S, S, S], 7, &opts()).unwrap();
        let b = ssa_network_sis(&r, &[I, S, S, S, S], 7, &opts()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn censoring() {
        let g = Graph::generate(&GraphKind::Complete, 10).unwrap();
        let r = RateModel::homogeneous(&g, 2.0, 1.0).unwrap();
        let o = SsaOptions {
            t_cap: 5.0,
            record_events: false,
        };
        let out = ssa_network_sis(&r, &[I; 10], 3, &o).unwrap();
        assert!(out.censored);
        assert_eq!(out.absorption_time, None);
        assert!(out.events.is_empty() && out.event_count > 0);
    }

    #[test]
    fn rejects_foreign_compartments() {
        let g = Graph::generate(&GraphKind::Path, 2).unwrap();
        let r = RateModel::homogeneous(&g, 1.0, 1.0).unwrap();
        assert!(matches!(
            ssa_network_sis(&r, &[I, Compartment::R], 0, &opts()),
            Err(StochasticError::BadInitialState { node: 1, .. })
        ));
    }
}
