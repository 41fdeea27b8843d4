//! Fixed-step classical Runge-Kutta.

use super::{MeanFieldError, StateLayout, Trajectory, VectorField};

/// Overshoot outside `[0, 1]` that is silently clamped away.
pub const CLAMP_TOL: f64 = 1e-12;
/// Allowed drift of per-node compartment sums in closed layouts.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    /// Nominal step; the actual step is `T / round(T / dt)`.
    pub dt: f64,
    /// Keep every `record_every`-th step (the final step is always kept).
    pub record_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            record_every: 1,
        }
    }
}

impl IntegrateOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }
}

/// One RK4 step from `(t, x)` of size `h`, written into `out`.
pub fn rk4_step<F: VectorField + ?Sized>(
    field: &F,
    t: f64,
    h: f64,
    x: &[f64],
    out: &mut [f64],
    ws: &mut Rk4Workspace,
) -> Result<(), MeanFieldError> {
    let n = x.len();
    field.derivative(t, x, &mut ws.k1)?;
    for k in 0..n {
        ws.tmp[k] = x[k] + 0.5 * h * ws.k1[k];
    }
    field.derivative(t + 0.5 * h, &ws.tmp, &mut ws.k2)?;
    for k in 0..n {
        ws.tmp[k] = x[k] + 0.5 * h * ws.k2[k];
    }
    field.derivative(t + 0.5 * h, &ws.tmp, &mut ws.k3)?;
    for k in 0..n {
        ws.tmp[k] = x[k] + h * ws.k3[k];
    }
    field.derivative(t + h, &ws.tmp, &mut ws.k4)?;
    for k in 0..n {
        out[k] = x[k] + h / 6.0 * (ws.k1[k] + 2.0 * ws.k2[k] + 2.0 * ws.k3[k] + ws.k4[k]);
    }
    Ok(())
}

/// Clamps tiny overshoots into `[0, 1]` and rejects anything larger; checks
/// per-node sums of closed layouts.
pub fn enforce_invariants(
    layout: &StateLayout,
    t: f64,
    x: &mut [f64],
) -> Result<(), MeanFieldError> {
    for (index, v) in x.iter_mut().enumerate() {
        if !v.is_finite() || *v < -CLAMP_TOL || *v > 1.0 + CLAMP_TOL {
            return Err(MeanFieldError::OutOfBounds {
                time: t,
                index,
                value: *v,
            });
        }
        *v = v.clamp(0.0, 1.0);
    }
    if layout.closed {
        let n = layout.nodes;
        for node in 0..n {
            let sum: f64 = (0..layout.compartments.len())
                .map(|c| x[c * n + node])
                .sum();
            if (sum - 1.0).abs() > CONSERVATION_TOL {
                return Err(MeanFieldError::Conservation { time: t, node, sum });
            }
        }
    }
    Ok(())
}

/// Integrates `field` from `x0` over `[0, horizon]`.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, MeanFieldError> {
    let layout = field.layout().clone();
    super::check_len("initial state", x0.len(), layout.len())?;
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(MeanFieldError::InvalidParameter {
            name: "dt".into(),
            value: opts.dt,
            reason: "step must be positive",
        });
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(MeanFieldError::InvalidParameter {
            name: "horizon".into(),
            value: horizon,
            reason: "horizon must be finite and nonnegative",
        });
    }
    let stride = opts.record_every.max(1);
    let mut x = x0.to_vec();
    enforce_invariants(&layout, 0.0, &mut x)?;

    let steps = if horizon == 0.0 {
        0
    } else {
        ((horizon / opts.dt).round() as usize).max(1)
    };
    let h = if steps == 0 {
        0.0
    } else {
        horizon / steps as f64
    };
    let mut times = Vec::with_capacity(steps / stride + 2);
    let mut states = Vec::with_capacity(steps / stride + 2);
    times.push(0.0);
    states.push(x.clone());

    let mut ws = Rk4Workspace::new(x.len());
    let mut next = vec![0.0; x.len()];
    for k in 0..steps {
        let t = k as f64 * h;
        rk4_step(field, t, h, &x, &mut next, &mut ws)?;
        let t1 = if k + 1 == steps {
            horizon
        } else {
            (k + 1) as f64 * h
        };
        enforce_invariants(&layout, t1, &mut next)?;
        std::mem::swap(&mut x, &mut next);
        if (k + 1) % stride == 0 || k + 1 == steps {
            times.push(t1);
            states.push(x.clone());
        }
    }
    Ok(Trajectory {
        model: field.name().to_string(),
        layout,
        times,
        states,
    })
}
