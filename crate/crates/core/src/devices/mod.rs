//! Device costs and proximal operators.
//!
//! Schedules of one device occupy a contiguous block of `τT` entries laid out
//! terminal-major (`block[i·T + t]`), the same layout the QP forms use.

pub mod ac_line;
pub mod battery;
pub mod dc_line;
pub mod fixed_load;
pub mod generator;
mod params;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use params::*;

use crate::error::{Error, Result};
use crate::oracle::ipm::{self, DenseQp, IpmOptions, IpmStatus, LinRow};
use crate::qp::{build_workspace, qp_prox, InnerStop, QpDeviceForm, QpFactor, QpWarm};

/// Absolute per-entry constraint violation tolerated when reporting costs.
pub const FEAS_TOL: f64 = 1e-6;

/// QP encoding of a device for the QP-backed kinds.
pub fn qp_form(params: &GroupParams, d: usize, horizon: usize) -> Option<QpDeviceForm> {
    match params {
        GroupParams::Battery(v) => Some(battery::form(&v[d], horizon)),
        GroupParams::GenericQp(v) => Some(v[d].clone()),
        _ => None,
    }
}

/// Cost of device `d` for the schedule block `(p, θ)`; +∞ when infeasible.
pub fn cost(params: &GroupParams, d: usize, p: &[f64], theta: &[f64]) -> f64 {
    match params {
        GroupParams::Generator(v) => generator::cost(&v[d], p),
        GroupParams::FixedLoad(v) => fixed_load::cost(&v[d], p),
        GroupParams::AcLine(v) => ac_line::cost(&v[d], p, theta),
        GroupParams::DcLine(v) => dc_line::cost(&v[d], p),
        GroupParams::Battery(v) => battery::cost(&v[d], p),
        GroupParams::GenericQp(v) => generic_cost(&v[d], p, theta),
    }
}

/// Minimizes the local part of a QP form with `(p, θ)` held fixed.
pub fn generic_cost(form: &QpDeviceForm, p: &[f64], theta: &[f64]) -> f64 {
    let np = form.power_dim();
    let mu = form.local_dim;
    let mut qp = DenseQp::new(mu);
    for &(i, j, v) in &form.quad {
        qp.add_quad(i, j, v);
    }
    for (j, &c) in form.lin.iter().enumerate() {
        qp.c[j] = c;
    }
    let split = |row: &crate::qp::SparseRow, slack: f64| -> Option<LinRow> {
        let mut rhs = row.rhs;
        let mut coef = Vec::new();
        for &(j, a) in &row.entries {
            if j < np {
                rhs -= a * p[j];
            } else if j < 2 * np {
                rhs -= a * theta[j - np];
            } else {
                coef.push((j - 2 * np, a));
            }
        }
        if coef.is_empty() {
            // Pure (p, θ) row: check it directly.
            return if rhs >= -slack {
                None
            } else {
                Some(LinRow::new(vec![], -1.0))
            };
        }
        Some(LinRow::new(coef, rhs))
    };
    for row in form.eq_rows() {
        let mut lo = row.clone();
        lo.rhs += FEAS_TOL;
        let mut hi = row.clone();
        for e in &mut hi.entries {
            e.1 = -e.1;
        }
        hi.rhs = -row.rhs + FEAS_TOL;
        for r in [split(&lo, 0.0), split(&hi, 0.0)].into_iter().flatten() {
            qp.ineq.push(r);
        }
    }
    for row in form.ineq_rows() {
        let mut relaxed = row.clone();
        relaxed.rhs += FEAS_TOL;
        if let Some(r) = split(&relaxed, 0.0) {
            qp.ineq.push(r);
        }
    }
    if qp.ineq.iter().any(|r| r.coef.is_empty()) {
        return f64::INFINITY;
    }
    match ipm::solve(&qp, &IpmOptions::default()) {
        Ok(sol) if sol.status == IpmStatus::Optimal => sol.objective,
        _ => f64::INFINITY,
    }
}

/// Analytic prox of device `d`. `theta` is left untouched for kinds whose cost ignores phase
/// other than copying `y`.
#[allow(clippy::too_many_arguments)]
pub fn prox_analytic(
    params: &GroupParams,
    d: usize,
    x: &[f64],
    y: &[f64],
    rho_p: f64,
    rho_theta: f64,
    p: &mut [f64],
    theta: &mut [f64],
) {
    match params {
        GroupParams::Generator(v) => {
            generator::prox(&v[d], x, rho_p, p);
            theta.copy_from_slice(y);
        }
        GroupParams::FixedLoad(v) => {
            fixed_load::prox(&v[d], p);
            theta.copy_from_slice(y);
        }
        GroupParams::AcLine(v) => ac_line::prox(&v[d], x, y, rho_p, rho_theta, p, theta),
        GroupParams::DcLine(v) => {
            dc_line::prox(&v[d], x, p);
            theta.copy_from_slice(y);
        }
        GroupParams::Battery(_) | GroupParams::GenericQp(_) => {
            unreachable!("QP-backed kinds go through QpBatch")
        }
    }
}

/// Prox targets for one group slice: `x`, `y` hold `|ℓ|·τ·T` entries.
#[derive(Clone, Copy, Debug)]
pub struct ProxRequest<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub rho_p: f64,
    pub rho_theta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxResult {
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Applies the kind-appropriate prox to every device of a group slice, in parallel over
/// devices. QP-backed kinds need their batch state.
pub fn dispatch_prox(
    params: &GroupParams,
    horizon: usize,
    req: &ProxRequest<'_>,
    qp: Option<(&mut QpBatch, usize)>,
    stop: InnerStop,
) -> Result<ProxResult> {
    let mut p = vec![0.0; req.x.len()];
    let mut theta = vec![0.0; req.y.len()];
    prox_into(params, horizon, req, qp, stop, &mut p, &mut theta)?;
    Ok(ProxResult { p, theta })
}

/// In-place form of [`dispatch_prox`]. `qp` carries the batch and the slice index.
pub fn prox_into(
    params: &GroupParams,
    horizon: usize,
    req: &ProxRequest<'_>,
    qp: Option<(&mut QpBatch, usize)>,
    stop: InnerStop,
    p: &mut [f64],
    theta: &mut [f64],
) -> Result<()> {
    let count = params.len();
    if count == 0 {
        return Ok(());
    }
    let block = req.x.len() / count;
    if req.x.len() != count * block
        || req.y.len() != req.x.len()
        || p.len() != req.x.len()
        || theta.len() != req.x.len()
        || !block.is_multiple_of(horizon)
    {
        return Err(Error::Shape(format!(
            "prox request for {} {} devices has {} targets",
            count,
            params.kind().name(),
            req.x.len()
        )));
    }
    if params.kind().is_analytic() {
        p.par_chunks_mut(block)
            .zip(theta.par_chunks_mut(block))
            .enumerate()
            .for_each(|(d, (pd, td))| {
                let r = d * block..(d + 1) * block;
                prox_analytic(
                    params,
                    d,
                    &req.x[r.clone()],
                    &req.y[r],
                    req.rho_p,
                    req.rho_theta,
                    pd,
                    td,
                );
            });
        return Ok(());
    }
    let (batch, slice) = qp.ok_or_else(|| {
        Error::Config(format!(
            "{} group needs an inner QP workspace",
            params.kind().name()
        ))
    })?;
    batch.prox_slice(slice, req, stop, p, theta)
}

/// Inner-solver state for every device of a QP-backed group, across its slices.
///
/// Devices with identical forms share one numeric factorization; forms with the same
/// sparsity share the fill-reducing ordering.
#[derive(Clone, Debug)]
pub struct QpBatch {
    devices: usize,
    block: usize,
    form_of: Vec<usize>,
    factors: Vec<Arc<QpFactor>>,
    pub warm: Vec<QpWarm>,
    /// Local variables from the latest prox of each device.
    pub locals: Vec<Vec<f64>>,
    pub rho_p: f64,
    pub rho_theta: f64,
}

impl QpBatch {
    /// `slices[k]` are the group parameters of slice `k`.
    pub fn new(
        slices: &[&GroupParams],
        horizon: usize,
        rho_p: f64,
        rho_theta: f64,
        omega: f64,
    ) -> Result<Self> {
        let devices = slices.first().map(|s| s.len()).unwrap_or(0);
        let mut forms: Vec<QpDeviceForm> = Vec::new();
        let mut factors: Vec<Arc<QpFactor>> = Vec::new();
        let mut form_of = Vec::with_capacity(devices * slices.len());
        let mut warm = Vec::with_capacity(devices * slices.len());
        let mut block = 0;
        for params in slices {
            for d in 0..devices {
                let form = qp_form(params, d, horizon).ok_or_else(|| {
                    Error::Config(format!("{} devices have no QP form", params.kind().name()))
                })?;
                block = form.power_dim();
                warm.push(QpWarm::new(&form));
                let id = match forms.iter().position(|f| *f == form) {
                    Some(id) => id,
                    None => {
                        let factor = match factors.iter().find(|f| f.form().same_pattern(&form)) {
                            Some(shared) => shared.with_form(&form)?,
                            None => build_workspace(&form, rho_p, rho_theta, omega)?,
                        };
                        factors.push(Arc::new(factor));
                        forms.push(form);
                        forms.len() - 1
                    }
                };
                form_of.push(id);
            }
        }
        let locals = form_of
            .iter()
            .map(|&id| vec![0.0; factors[id].form().local_dim])
            .collect();
        Ok(Self {
            devices,
            block,
            form_of,
            factors,
            warm,
            locals,
            rho_p,
            rho_theta,
        })
    }

    /// Number of distinct numeric factorizations.
    pub fn unique_forms(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, slice: usize, d: usize) -> &QpFactor {
        &self.factors[self.form_of[slice * self.devices + d]]
    }

    /// Refactorizes when the penalties change. Inner iterates are kept.
    pub fn set_penalties(&mut self, rho_p: f64, rho_theta: f64) -> Result<()> {
        if rho_p == self.rho_p && rho_theta == self.rho_theta {
            return Ok(());
        }
        self.factors = self
            .factors
            .par_iter()
            .map(|f| f.refactor(rho_p, rho_theta).map(Arc::new))
            .collect::<Result<_>>()?;
        self.rho_p = rho_p;
        self.rho_theta = rho_theta;
        Ok(())
    }

    /// Prox of every device in `slice` at the batch penalties scaled by `req`.
    ///
    /// The request penalties must be positive multiples of the batch penalties with the
    /// same factor for power and phase (shared groups use `(K+1)ρ`); a new factorization
    /// is built on the fly otherwise.
    pub fn prox_slice(
        &mut self,
        slice: usize,
        req: &ProxRequest<'_>,
        stop: InnerStop,
        p: &mut [f64],
        theta: &mut [f64],
    ) -> Result<()> {
        let block = self.block;
        let range = slice * self.devices..(slice + 1) * self.devices;
        let factors = &self.factors;
        let form_of = &self.form_of[range.clone()];
        let same = req.rho_p == self.rho_p && req.rho_theta == self.rho_theta;
        let warm = &mut self.warm[range.clone()];
        let locals = &mut self.locals[range];
        p.par_chunks_mut(block)
            .zip(theta.par_chunks_mut(block))
            .zip(warm.par_iter_mut().zip(locals.par_iter_mut()))
            .enumerate()
            .try_for_each(|(d, ((pd, td), (w, s)))| -> Result<()> {
                let r = d * block..(d + 1) * block;
                let base = &factors[form_of[d]];
                let scaled;
                let factor: &QpFactor = if same {
                    base
                } else {
                    scaled = base.refactor(req.rho_p, req.rho_theta)?;
                    &scaled
                };
                let sol = qp_prox(factor, w, &req.x[r.clone()], &req.y[r], stop);
                pd.copy_from_slice(&sol.p);
                td.copy_from_slice(&sol.theta);
                *s = sol.s;
                Ok(())
            })
    }
}

/// Differentiable parameter fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    QuadraticCost,
    LinearCost,
    PMin,
    PMax,
    Load,
    Capacity,
    Susceptance,
}

impl ParamField {
    pub const ALL: [ParamField; 7] = [
        ParamField::QuadraticCost,
        ParamField::LinearCost,
        ParamField::PMin,
        ParamField::PMax,
        ParamField::Load,
        ParamField::Capacity,
        ParamField::Susceptance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamField::QuadraticCost => "quadratic_cost",
            ParamField::LinearCost => "linear_cost",
            ParamField::PMin => "p_min",
            ParamField::PMax => "p_max",
            ParamField::Load => "load",
            ParamField::Capacity => "capacity",
            ParamField::Susceptance => "susceptance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Slot of this field in the per-device parameter tangent of `kind`.
    pub fn slot(self, kind: DeviceKind) -> Option<usize> {
        use ParamField::*;
        match (kind, self) {
            (DeviceKind::Generator, QuadraticCost) => Some(0),
            (DeviceKind::Generator, LinearCost) => Some(1),
            (DeviceKind::Generator, PMin) => Some(2),
            (DeviceKind::Generator, PMax) => Some(3),
            (DeviceKind::FixedLoad, Load) => Some(0),
            (DeviceKind::AcLine, Capacity) => Some(0),
            (DeviceKind::AcLine, Susceptance) => Some(1),
            (DeviceKind::DcLine, Capacity) => Some(0),
            _ => None,
        }
    }
}

/// Number of differentiable parameter slots per device.
pub fn param_slots(kind: DeviceKind) -> usize {
    match kind {
        DeviceKind::Generator => generator::PARAMS,
        DeviceKind::FixedLoad => 1,
        DeviceKind::AcLine => ac_line::PARAMS,
        DeviceKind::DcLine => dc_line::PARAMS,
        DeviceKind::Battery | DeviceKind::GenericQp => 0,
    }
}

/// Reads a scalar parameter; series fields report their first entry.
pub fn get_param(params: &GroupParams, d: usize, field: ParamField) -> Option<f64> {
    use ParamField::*;
    Some(match (params, field) {
        (GroupParams::Generator(v), QuadraticCost) => v.get(d)?.quadratic_cost,
        (GroupParams::Generator(v), LinearCost) => v.get(d)?.linear_cost,
        (GroupParams::Generator(v), PMin) => *v.get(d)?.p_min.first()?,
        (GroupParams::Generator(v), PMax) => *v.get(d)?.p_max.first()?,
        (GroupParams::FixedLoad(v), Load) => *v.get(d)?.p_load.first()?,
        (GroupParams::AcLine(v), Capacity) => v.get(d)?.capacity,
        (GroupParams::AcLine(v), Susceptance) => v.get(d)?.susceptance,
        (GroupParams::DcLine(v), Capacity) => v.get(d)?.capacity,
        _ => return None,
    })
}

/// Adds `delta` to a parameter. Series fields shift every time step.
pub fn shift_param(params: &mut GroupParams, d: usize, field: ParamField, delta: f64) -> bool {
    use ParamField::*;
    match (params, field) {
        (GroupParams::Generator(v), QuadraticCost) => v[d].quadratic_cost += delta,
        (GroupParams::Generator(v), LinearCost) => v[d].linear_cost += delta,
        (GroupParams::Generator(v), PMin) => v[d].p_min.iter_mut().for_each(|x| *x += delta),
        (GroupParams::Generator(v), PMax) => v[d].p_max.iter_mut().for_each(|x| *x += delta),
        (GroupParams::FixedLoad(v), Load) => v[d].p_load.iter_mut().for_each(|x| *x += delta),
        (GroupParams::AcLine(v), Capacity) => v[d].capacity += delta,
        (GroupParams::AcLine(v), Susceptance) => v[d].susceptance += delta,
        (GroupParams::DcLine(v), Capacity) => v[d].capacity += delta,
        _ => return false,
    }
    true
}

/// Tangent of the analytic prox of device `d`; `dparam` is indexed by [`ParamField::slot`].
#[allow(clippy::too_many_arguments)]
pub fn prox_jvp(
    params: &GroupParams,
    d: usize,
    x: &[f64],
    y: &[f64],
    rho_p: f64,
    rho_theta: f64,
    dx: &[f64],
    dy: &[f64],
    dparam: &[f64],
    dp: &mut [f64],
    dtheta: &mut [f64],
) {
    match params {
        GroupParams::Generator(v) => {
            let dpar = [dparam[0], dparam[1], dparam[2], dparam[3]];
            generator::jvp(&v[d], x, rho_p, dx, &dpar, dp);
            dtheta.copy_from_slice(dy);
        }
        GroupParams::FixedLoad(_) => {
            dp.iter_mut().for_each(|v| *v = dparam[0]);
            dtheta.copy_from_slice(dy);
        }
        GroupParams::AcLine(v) => {
            let dpar = [dparam[0], dparam[1]];
            ac_line::jvp(&v[d], x, y, rho_p, rho_theta, dx, dy, &dpar, dp, dtheta);
        }
        GroupParams::DcLine(v) => {
            dc_line::jvp(&v[d], x, dx, &[dparam[0]], dp);
            dtheta.copy_from_slice(dy);
        }
        GroupParams::Battery(_) | GroupParams::GenericQp(_) => {
            unreachable!("QP-backed kinds are not differentiated")
        }
    }
}

/// Adjoint of [`prox_jvp`]: accumulates into `gx`, `gy` and `gparam`.
#[allow(clippy::too_many_arguments)]
pub fn prox_vjp(
    params: &GroupParams,
    d: usize,
    x: &[f64],
    y: &[f64],
    rho_p: f64,
    rho_theta: f64,
    gp: &[f64],
    gtheta: &[f64],
    gx: &mut [f64],
    gy: &mut [f64],
    gparam: &mut [f64],
) {
    let pass_theta = |gy: &mut [f64]| {
        for (a, b) in gy.iter_mut().zip(gtheta) {
            *a += b;
        }
    };
    match params {
        GroupParams::Generator(v) => {
            let mut g = [0.0; generator::PARAMS];
            generator::vjp(&v[d], x, rho_p, gp, gx, &mut g);
            for (a, b) in gparam.iter_mut().zip(g) {
                *a += b;
            }
            pass_theta(gy);
        }
        GroupParams::FixedLoad(_) => {
            gparam[0] += gp.iter().sum::<f64>();
            pass_theta(gy);
        }
        GroupParams::AcLine(v) => {
            let mut g = [0.0; ac_line::PARAMS];
            ac_line::vjp(&v[d], x, y, rho_p, rho_theta, gp, gtheta, gx, gy, &mut g);
            for (a, b) in gparam.iter_mut().zip(g) {
                *a += b;
            }
        }
        GroupParams::DcLine(v) => {
            let mut g = [0.0; dc_line::PARAMS];
            dc_line::vjp(&v[d], x, gp, gx, &mut g);
            gparam[0] += g[0];
            pass_theta(gy);
        }
        GroupParams::Battery(_) | GroupParams::GenericQp(_) => {
            unreachable!("QP-backed kinds are not differentiated")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gens() -> GroupParams {
        GroupParams::Generator(vec![
            GeneratorParams {
                quadratic_cost: 0.5,
                linear_cost: 1.0,
                p_min: vec![0.0, 0.0],
                p_max: vec![3.0, 3.0],
            };
            2
        ])
    }

    #[test]
    fn identical_devices_identical_outputs() {
        let params = gens();
        let x = [1.0, 2.0, 1.0, 2.0];
        let y = [0.1, 0.2, 0.1, 0.2];
        let req = ProxRequest {
            x: &x,
            y: &y,
            rho_p: 1.0,
            rho_theta: 1.0,
        };
        let out = dispatch_prox(&params, 2, &req, None, InnerStop::default()).unwrap();
        assert_eq!(out.p[..2], out.p[2..]);
        assert_eq!(out.theta, y);
    }

    #[test]
    fn batch_equals_sequential() {
        let params = GroupParams::AcLine(vec![
            AcLineParams {
                capacity: 1.0,
                susceptance: 2.0,
            },
            AcLineParams {
                capacity: 5.0,
                susceptance: 0.5,
            },
        ]);
        let x = [0.3, -1.0, 2.0, 0.4, 1.5, -0.2, 0.0, 3.0];
        let y = [0.0, 0.1, -0.3, 0.2, 0.5, 0.5, -0.1, 0.0];
        let req = ProxRequest {
            x: &x,
            y: &y,
            rho_p: 1.3,
            rho_theta: 0.7,
        };
        let out = dispatch_prox(&params, 2, &req, None, InnerStop::default()).unwrap();
        for d in 0..2 {
            let mut p = [0.0; 4];
            let mut th = [0.0; 4];
            prox_analytic(
                &params,
                d,
                &x[d * 4..][..4],
                &y[d * 4..][..4],
                1.3,
                0.7,
                &mut p,
                &mut th,
            );
            assert_eq!(out.p[d * 4..][..4], p);
            assert_eq!(out.theta[d * 4..][..4], th);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = gens();
        let x = [1.0; 3];
        let req = ProxRequest {
            x: &x,
            y: &x,
            rho_p: 1.0,
            rho_theta: 1.0,
        };
        assert!(matches!(
            dispatch_prox(&params, 2, &req, None, InnerStop::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn identical_batteries_share_a_factor() {
        let b = BatteryParams {
            discharge_cost: 1.0,
            efficiency: 0.9,
            power_capacity: 1.0,
            duration: 2.0,
        };
        let mut other = b.clone();
        other.power_capacity = 2.0;
        let params = GroupParams::Battery(vec![b.clone(), b, other]);
        let batch = QpBatch::new(&[&params], 4, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(batch.unique_forms(), 2);
    }

    #[test]
    fn generic_cost_matches_battery_cost() {
        let b = BatteryParams {
            discharge_cost: 2.0,
            efficiency: 0.8,
            power_capacity: 1.0,
            duration: 2.0,
        };
        let form = battery::form(&b, 3);
        let p = [-1.0, 0.3, 0.5];
        let exact = battery::cost(&b, &p);
        let via_qp = generic_cost(&form, &p, &[0.0; 3]);
        assert!((exact - via_qp).abs() < 1e-5, "{exact} vs {via_qp}");
        assert_eq!(
            generic_cost(&form, &[1.0, 0.0, 0.0], &[0.0; 3]),
            f64::INFINITY
        );
    }

    #[test]
    fn field_names_round_trip() {
        for f in ParamField::ALL {
            assert_eq!(ParamField::parse(f.name()), Some(f));
        }
    }
}
