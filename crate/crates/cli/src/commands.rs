//! One function per command. Scenario problems are reported as
//! [`CliError::Invalid`] before any solver runs.

use std::fmt::Write as _;

use epinet::allocation::{check_threshold, decay_rate, solve_allocation, AllocationError};
use epinet::graph::{lambda_max, Graph};
use epinet::meanfield::{
    closed_form_population_sis, endemic_equilibrium, format_sig, integrate, Compartment,
    Equilibrium, IntegrateOptions, NetworkSis, PopulationSir, PopulationSis, RateModel, Trajectory,
};
use epinet::optctrl::{
    classify_population_policy, evaluate_objective, fbs_population_sis, fbs_sir_network,
    fbs_sis_network, simulate, ControlProblem, ControlledSystem, FbsOptions, FbsResult,
    PolicySchedule, PopulationSystem, SirSystem, SisSystem,
};
use epinet::stochastic::{
    estimate_extinction_time, estimate_marginals, events_to_csv, exact_master_equation,
    extinction_time_bound, ssa_network_sis, MasterSolution, SsaOptions, StochasticError,
    MAX_MASTER_NODES,
};
use serde::Serialize;

use crate::report::Output;
use crate::scenario::{
    build_rates, check_positive, homogeneous, AllocateScenario, CompareScenario, MeanfieldModel,
    MeanfieldScenario, OptctrlScenario, PerNode, Scenario, SimulateScenario, ThresholdScenario,
};
use crate::svg::{line_plot, Series};
use crate::CliError;

/// Series drawn individually per node up to this many nodes.
const MAX_PLOTTED_NODES: usize = 8;

pub fn dispatch(scenario: &Scenario, out: &mut Output) -> Result<(), CliError> {
    match scenario {
        Scenario::Threshold(s) => threshold(s, out),
        Scenario::Simulate(s) => simulate_runs(s, out),
        Scenario::Meanfield(s) => meanfield(s, out),
        Scenario::Allocate(s) => allocate(s, out),
        Scenario::Optctrl(s) => optctrl(s, out),
        Scenario::Compare(s) => compare(s, out),
    }
}

fn threshold(s: &ThresholdScenario, out: &mut Output) -> Result<(), CliError> {
    let g = s.graph.build("graph")?;
    let rates = build_rates(&g, &s.beta, &s.delta)?;
    let spectral = lambda_max(&g.adjacency())?;
    let check = check_threshold(&g, &rates)?;
    out.headline("nodes", g.node_count());
    out.headline("edges", g.edge_count());
    out.headline("lambda_max", spectral.lambda_max);
    out.headline("lambda_max_b_minus_d", check.lambda_max);
    out.headline("margin", check.margin);
    out.headline("verdict", check.verdict);
    out.headline("strongly_connected", check.strongly_connected);
    if let Some((beta, delta)) = homogeneous(&s.beta, &s.delta) {
        out.headline("tau", beta / delta);
        if spectral.lambda_max > 0.0 {
            out.headline("inverse_lambda_max", 1.0 / spectral.lambda_max);
        }
        let bound = extinction_time_bound(&g, beta, delta)?;
        out.headline("extinction_time_bound", bound);
        if bound.is_none() {
            out.note("extinction-time bound only applies below the threshold");
        }
    }
    if !check.strongly_connected {
        out.note("graph is not strongly connected: a stable verdict is sufficient, an endemic one may be local");
    }
    #[derive(Serialize)]
    struct Details<'a> {
        check: &'a epinet::allocation::ThresholdCheck,
        spectral: &'a epinet::SpectralResult,
    }
    out.write_json(
        "threshold.json",
        &Details {
            check: &check,
            spectral: &spectral,
        },
    )
}

fn check_sample_times(times: &[f64]) -> Result<(), CliError> {
    for (k, &t) in times.iter().enumerate() {
        if !(t >= 0.0 && t.is_finite() && (k == 0 || t > times[k - 1])) {
            return Err(CliError::invalid(
                &format!("sample_times[{k}]"),
                format!("{t}: times must be finite, nonnegative and increasing"),
            ));
        }
    }
    Ok(())
}

fn simulate_runs(s: &SimulateScenario, out: &mut Output) -> Result<(), CliError> {
    let g = s.graph.build("graph")?;
    let n = g.node_count();
    let rates = build_rates(&g, &s.beta, &s.delta)?;
    let x0 = s.initial.compartments("initial", n)?;
    if s.runs == 0 {
        return Err(CliError::invalid("runs", "need at least one run".into()));
    }
    if let Some(t) = s.t_cap {
        check_positive("t_cap", t)?;
    }
    check_sample_times(&s.sample_times)?;

    out.headline("runs", s.runs);
    out.headline("seed", s.seed);
    match estimate_extinction_time(&rates, &x0, s.runs, s.seed, s.t_cap) {
        Ok(est) => {
            out.headline("mean_extinction_time", est.mean);
            out.headline("std_error", est.std_error);
            out.headline("censored", est.censored);
            out.headline("t_cap", est.t_cap);
            out.write_json("extinction.json", &est)?;
        }
        Err(StochasticError::AllCensored { runs, t_cap }) => {
            out.headline("mean_extinction_time", None::<f64>);
            out.headline("censored", runs);
            out.headline("t_cap", t_cap);
            out.note("every run was still infected at the time cap");
        }
        Err(e) => return Err(e.into()),
    }
    if let Some((beta, delta)) = homogeneous(&s.beta, &s.delta) {
        out.headline(
            "extinction_time_bound",
            extinction_time_bound(&g, beta, delta)?,
        );
    }

    if !s.sample_times.is_empty() {
        let m = estimate_marginals(&rates, &x0, &s.sample_times, s.runs, s.seed)?;
        let mut csv = String::from("t");
        for i in 0..n {
            let _ = write!(csv, ",p_{i}");
        }
        for i in 0..n {
            let _ = write!(csv, ",se_{i}");
        }
        csv.push('\n');
        for (k, &t) in m.times.iter().enumerate() {
            csv.push_str(&format_sig(t));
            for v in m.mean[k].iter().chain(&m.std_error[k]) {
                let _ = write!(csv, ",{}", format_sig(*v));
            }
            csv.push('\n');
        }
        out.write("marginals.csv", &csv)?;
        let rows: Vec<Vec<f64>> = m.mean.clone();
        let series = node_series(&m.times, &rows, "P(I)");
        out.write(
            "marginals.svg",
            &line_plot(
                "Simulated infection probabilities",
                "t",
                "P(infected)",
                &series,
            ),
        )?;
    }
    if s.events {
        let opts = SsaOptions {
            t_cap: s
                .t_cap
                .unwrap_or_else(|| epinet::stochastic::default_t_cap(&rates)),
            record_events: true,
        };
        let run = ssa_network_sis(&rates, &x0, s.seed, &opts)?;
        out.write("events.csv", &events_to_csv(&run.events))?;
    }
    Ok(())
}

/// One line per node (when few) plus the network average.
fn node_series(times: &[f64], rows: &[Vec<f64>], prefix: &str) -> Vec<Series> {
    let n = rows.first().map_or(0, Vec::len);
    let mut series = Vec::new();
    if n <= MAX_PLOTTED_NODES {
        for i in 0..n {
            series.push(Series::new(
                format!("{prefix} node {i}"),
                times.to_vec(),
                rows.iter().map(|r| r[i]).collect(),
            ));
        }
    }
    if n > 1 {
        let avg = rows
            .iter()
            .map(|r| r.iter().sum::<f64>() / n as f64)
            .collect();
        series.push(Series::new(format!("{prefix} average"), times.to_vec(), avg).dashed());
    }
    series
}

fn trajectory_plot(tr: &Trajectory, title: &str) -> String {
    let names = tr.layout.column_names();
    let series: Vec<Series> = if names.len() <= MAX_PLOTTED_NODES {
        names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                Series::new(
                    name.clone(),
                    tr.times.clone(),
                    tr.states.iter().map(|s| s[k]).collect(),
                )
            })
            .collect()
    } else {
        // per-compartment averages
        tr.layout
            .compartments
            .iter()
            .filter_map(|&c| {
                let idx: Vec<usize> = (0..tr.layout.nodes)
                    .filter_map(|i| tr.layout.index(c, i))
                    .collect();
                (!idx.is_empty()).then(|| {
                    let ys = tr
                        .states
                        .iter()
                        .map(|s| idx.iter().map(|&k| s[k]).sum::<f64>() / idx.len() as f64)
                        .collect();
                    Series::new(format!("mean {}", c.label()), tr.times.clone(), ys)
                })
            })
            .collect()
    };
    line_plot(title, "t", "fraction", &series)
}

fn meanfield(s: &MeanfieldScenario, out: &mut Output) -> Result<(), CliError> {
    check_positive("horizon", s.horizon)?;
    check_positive("dt", s.dt)?;
    if s.record_every == 0 {
        return Err(CliError::invalid(
            "record_every",
            "must be at least 1".into(),
        ));
    }
    let opts = IntegrateOptions {
        dt: s.dt,
        record_every: s.record_every,
    };
    let check_population = |beta: f64, delta: f64, i0: f64| -> Result<(), CliError> {
        PerNode::Uniform(beta).check(
            "model.beta",
            |b| b >= 0.0,
            "must be finite and nonnegative",
        )?;
        check_positive("model.delta", delta)?;
        PerNode::Uniform(i0).check(
            "model.i0",
            |p| (0.0..=1.0).contains(&p),
            "must lie in [0, 1]",
        )
    };
    let tr = match &s.model {
        MeanfieldModel::PopulationSis { beta, delta, i0 } => {
            check_population(*beta, *delta, *i0)?;
            let tr = integrate(
                &PopulationSis::new(*beta, *delta)?,
                &[1.0 - i0, *i0],
                s.horizon,
                &opts,
            )?;
            let err = tr
                .times
                .iter()
                .zip(&tr.states)
                .map(|(&t, x)| (x[1] - closed_form_population_sis(*beta, *delta, *i0, t)).abs())
                .fold(0.0f64, f64::max);
            let limit = if beta > delta {
                1.0 - delta / beta
            } else {
                0.0
            };
            out.headline("final_infected", tr.final_state()[1]);
            out.headline("limit_infected", limit);
            out.headline("max_closed_form_error", err);
            tr
        }
        MeanfieldModel::PopulationSir { beta, delta, i0 } => {
            check_population(*beta, *delta, *i0)?;
            let tr = integrate(
                &PopulationSir::new(*beta, *delta)?,
                &[1.0 - i0, *i0, 0.0],
                s.horizon,
                &opts,
            )?;
            let (k, peak) =
                tr.states
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(kb, b), (k, x)| {
                        if x[1] > b {
                            (k, x[1])
                        } else {
                            (kb, b)
                        }
                    });
            out.headline("peak_infected", peak);
            out.headline("peak_time", tr.times[k]);
            out.headline("final_susceptible", tr.final_state()[0]);
            out.headline("final_removed", tr.final_state()[2]);
            tr
        }
        MeanfieldModel::NetworkSis {
            graph,
            beta,
            delta,
            initial,
        } => {
            let g = graph.build("model.graph")?;
            let rates = build_rates(&g, beta, delta)?;
            let p0 = initial.probabilities("model.initial", g.node_count())?;
            let tr = integrate(&NetworkSis::new(rates.clone()), &p0, s.horizon, &opts)?;
            let end = tr.final_state();
            out.headline(
                "final_mean_infected",
                end.iter().sum::<f64>() / end.len() as f64,
            );
            if rates.is_strongly_connected() {
                let eq = endemic_equilibrium(&rates)?;
                out.headline("lambda_max_b_minus_d", eq.lambda());
                out.headline("endemic", eq.is_endemic());
                if let Equilibrium::Endemic { p, residual, .. } = &eq {
                    out.headline("equilibrium_residual", residual);
                    let gap = p
                        .iter()
                        .zip(end)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    out.headline("distance_to_equilibrium", gap);
                }
                out.write_json("equilibrium.json", &eq)?;
            } else {
                out.note("graph is not strongly connected; no endemic equilibrium computed");
            }
            tr
        }
    };
    out.write("trajectory.csv", &tr.to_csv())?;
    out.write("trajectory.svg", &trajectory_plot(&tr, &tr.model))
}

fn allocation_invalid(e: AllocationError) -> CliError {
    match e {
        AllocationError::InvalidParameter {
            name,
            value,
            reason,
        } => CliError::invalid(&name, format!("{value}: {reason}")),
        AllocationError::NotExpressible { name, reason } => CliError::invalid(&name, reason.into()),
        AllocationError::ZeroSpendInfeasible { budget, .. } => {
            CliError::invalid("budget", format!("{budget} must be nonnegative"))
        }
        other => CliError::invalid("allocation", other.to_string()),
    }
}

fn allocate(s: &AllocateScenario, out: &mut Output) -> Result<(), CliError> {
    let g = s.graph.build("graph")?;
    let problem = s.problem(g.clone())?;
    problem.validate().map_err(allocation_invalid)?;
    let (b0, d0) = problem.zero_spend();
    let before = lambda_max(&problem.metzler(&b0, &d0))?.lambda_max;
    let result = solve_allocation(&problem)?;
    let after = decay_rate(&result, &g)?;
    out.headline("lambda_before", before);
    out.headline("lambda_after", after);
    out.headline("lambda_star", result.lambda_star);
    out.headline("phi", result.phi);
    out.headline("certified_decay_bound", result.lambda_star - result.phi);
    out.headline("spend", result.spend);
    out.headline("budget", s.budget);
    out.headline("disease_free_after", after < 0.0);
    out.write_json("allocation.json", &result)
}

#[derive(Serialize)]
struct Baseline {
    policy: String,
    objective: f64,
}

/// `J_T` of the constant lower and upper policies.
fn baselines<S: ControlledSystem>(sys: &S, x0: &[f64], dt: f64) -> Result<Vec<Baseline>, CliError> {
    let mut v = Vec::new();
    for (name, value) in [
        ("constant_lower", sys.lower()),
        ("constant_upper", sys.upper()),
    ] {
        let sched = PolicySchedule::constant(
            sys.signal(),
            sys.horizon(),
            sys.lower().to_vec(),
            sys.upper().to_vec(),
            value.to_vec(),
        )?;
        let tr = simulate(sys, x0, &sched, dt)?;
        v.push(Baseline {
            policy: name.into(),
            objective: evaluate_objective(sys, &sched, &tr)?,
        });
    }
    Ok(v)
}

fn optctrl(s: &OptctrlScenario, out: &mut Output) -> Result<(), CliError> {
    s.problem
        .validate()
        .map_err(|e| CliError::invalid("problem", e.to_string()))?;
    check_positive("dt", s.dt)?;
    let opts = FbsOptions {
        dt: s.dt,
        ..FbsOptions::default()
    };
    let need_graph = || match &s.graph {
        Some(g) => g.build("graph"),
        None => Err(CliError::invalid(
            "graph",
            "network control problems need a graph".into(),
        )),
    };
    let check_len = |want: usize| {
        if s.x0.len() == want {
            Ok(())
        } else {
            Err(CliError::invalid(
                "x0",
                format!("has {} entries, expected {want}", s.x0.len()),
            ))
        }
    };
    let check_nodes = |g: &Graph, have: usize| {
        if have == g.node_count() {
            Ok(())
        } else {
            Err(CliError::invalid(
                "problem",
                format!(
                    "per-node vectors have {have} entries but the graph has {} nodes",
                    g.node_count()
                ),
            ))
        }
    };
    let (res, base): (FbsResult, Vec<Baseline>) = match &s.problem {
        ControlProblem::Population(p) => {
            check_len(1)?;
            PerNode::Uniform(s.x0[0]).check(
                "x0[0]",
                |v| v > 0.0 && v <= 1.0,
                "must lie in (0, 1]",
            )?;
            let class = classify_population_policy(p)?;
            out.headline("classification", class);
            let res = fbs_population_sis(p, s.x0[0], &opts)?;
            let base = baselines(&PopulationSystem::new(p.clone())?, &s.x0, s.dt)?;
            (res, base)
        }
        ControlProblem::SirNetwork(p) => {
            let g = need_graph()?;
            check_nodes(&g, p.n())?;
            check_len(3 * g.node_count())?;
            let res = fbs_sir_network(p, &s.x0, &g, &opts)?;
            let base = baselines(&SirSystem::new(p.clone(), &g)?, &s.x0, s.dt)?;
            (res, base)
        }
        ControlProblem::SisNetwork(p) => {
            let g = need_graph()?;
            check_nodes(&g, p.n())?;
            check_len(g.node_count())?;
            let res = fbs_sis_network(p, &s.x0, &g, &opts)?;
            let base = baselines(&SisSystem::new(p.clone(), &g)?, &s.x0, s.dt)?;
            (res, base)
        }
    };
    out.headline("objective", res.objective);
    out.headline("relaxed_objective", res.relaxed_objective);
    out.headline("snapped", res.snapped);
    out.headline("switches", &res.switches);
    out.headline("iterations", res.iterations);
    out.headline("terminal_costate_residual", res.costate.terminal_residual());
    for b in &base {
        out.headline(&format!("objective_{}", b.policy), b.objective);
    }
    out.headline("heuristic", res.heuristic);
    if res.heuristic {
        out.note("heuristic result: a stationary point of the sweep with no optimality claim");
    }
    if !res.snapped {
        out.note("the converged control could not be snapped to bang-bang form; the relaxed schedule is reported");
    }
    if res.smoothing > 0.0 {
        out.note(format!(
            "sweep used a smoothed switching law of width {}",
            format_sig(res.smoothing)
        ));
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        objective: f64,
        relaxed_objective: f64,
        snapped: bool,
        iterations: usize,
        smoothing: f64,
        switches: &'a [usize],
        heuristic: bool,
        baselines: &'a [Baseline],
        schedule: &'a PolicySchedule,
    }
    out.write_json(
        "fbs.json",
        &Summary {
            objective: res.objective,
            relaxed_objective: res.relaxed_objective,
            snapped: res.snapped,
            iterations: res.iterations,
            smoothing: res.smoothing,
            switches: &res.switches,
            heuristic: res.heuristic,
            baselines: &base,
            schedule: &res.schedule,
        },
    )?;
    out.write("schedule.csv", &res.schedule.to_csv())?;
    out.write("trajectory.csv", &res.trajectory.to_csv())?;
    out.write(
        "trajectory.svg",
        &trajectory_plot(&res.trajectory, "controlled trajectory"),
    )
}

fn compare(s: &CompareScenario, out: &mut Output) -> Result<(), CliError> {
    let g = s.graph.build("graph")?;
    let n = g.node_count();
    if n > MAX_MASTER_NODES {
        return Err(CliError::invalid(
            "graph",
            format!("the exact solver handles at most {MAX_MASTER_NODES} nodes (got {n})"),
        ));
    }
    let rates: RateModel = build_rates(&g, &s.beta, &s.delta)?;
    let x0 = s.initial.compartments("initial", n)?;
    check_positive("horizon", s.horizon)?;
    if s.samples == 0 {
        return Err(CliError::invalid(
            "samples",
            "need at least one sample time".into(),
        ));
    }

    // integrate on a grid that contains every sample time
    let spacing = s.horizon / s.samples as f64;
    let per = (spacing / 1e-3).ceil().max(1.0) as usize;
    let opts = IntegrateOptions {
        dt: s.horizon / (s.samples * per) as f64,
        record_every: per,
    };
    let p0: Vec<f64> = x0
        .iter()
        .map(|&c| f64::from(u8::from(c == Compartment::I)))
        .collect();
    let mf = integrate(&NetworkSis::new(rates.clone()), &p0, s.horizon, &opts)?;
    let times = mf.times.clone();
    let exact = exact_master_equation(&rates, &MasterSolution::point_mass(&x0), &times)?;
    let ssa = if s.runs > 0 {
        Some(estimate_marginals(&rates, &x0, &times, s.runs, s.seed)?)
    } else {
        None
    };

    let mut csv = String::from("t,node,meanfield,exact");
    if ssa.is_some() {
        csv.push_str(",ssa,ssa_se");
    }
    csv.push('\n');
    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    for (k, &t) in times.iter().enumerate() {
        for i in 0..n {
            let (a, b) = (mf.states[k][i], exact.marginals[k][i]);
            min_gap = min_gap.min(a - b);
            max_gap = max_gap.max(a - b);
            let _ = write!(
                csv,
                "{},{i},{},{}",
                format_sig(t),
                format_sig(a),
                format_sig(b)
            );
            if let Some(m) = &ssa {
                let _ = write!(
                    csv,
                    ",{},{}",
                    format_sig(m.mean[k][i]),
                    format_sig(m.std_error[k][i])
                );
            }
            csv.push('\n');
        }
    }
    out.headline("samples", times.len());
    out.headline("min_meanfield_minus_exact", min_gap);
    out.headline("max_meanfield_minus_exact", max_gap);
    out.headline("meanfield_is_upper_bound", min_gap >= -1e-9);
    if let Some(m) = &ssa {
        let z = (0..times.len())
            .flat_map(|k| (0..n).map(move |i| (k, i)))
            .filter(|&(k, i)| m.std_error[k][i] > 0.0)
            .map(|(k, i)| (m.mean[k][i] - exact.marginals[k][i]).abs() / m.std_error[k][i])
            .fold(0.0f64, f64::max);
        out.headline("ssa_runs", s.runs);
        out.headline("seed", s.seed);
        out.headline("max_ssa_z_score", z);
    }
    out.write("compare.csv", &csv)?;

    let avg = |rows: &[Vec<f64>]| -> Vec<f64> {
        rows.iter()
            .map(|r| r.iter().sum::<f64>() / n as f64)
            .collect()
    };
    let mut series = vec![
        Series::new("mean-field", times.clone(), avg(&mf.states)),
        Series::new("exact", times.clone(), avg(&exact.marginals)),
    ];
    if let Some(m) = &ssa {
        series.push(Series::new("simulated", times.clone(), avg(&m.mean)).dashed());
    }
    out.write(
        "compare.svg",
        &line_plot(
            "Average infection probability",
            "t",
            "mean P(infected)",
            &series,
        ),
    )
}
