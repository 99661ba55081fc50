use serde::{Deserialize, Serialize};

use crate::qp::QpDeviceForm;

/// Closed catalog of device kinds plus the generic quadratic-program kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Generator,
    FixedLoad,
    AcLine,
    DcLine,
    Battery,
    GenericQp,
}

impl DeviceKind {
    /// Terminal count for the fixed-arity kinds. Generic QP devices declare their own.
    pub fn fixed_terminals(self) -> Option<usize> {
        match self {
            DeviceKind::Generator | DeviceKind::FixedLoad | DeviceKind::Battery => Some(1),
            DeviceKind::AcLine | DeviceKind::DcLine => Some(2),
            DeviceKind::GenericQp => None,
        }
    }

    /// Kinds whose prox is a closed form (and therefore differentiable on the tape).
    pub fn is_analytic(self) -> bool {
        !matches!(self, DeviceKind::Battery | DeviceKind::GenericQp)
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceKind::Generator => "generator",
            DeviceKind::FixedLoad => "fixed_load",
            DeviceKind::AcLine => "ac_line",
            DeviceKind::DcLine => "dc_line",
            DeviceKind::Battery => "battery",
            DeviceKind::GenericQp => "generic_qp",
        }
    }
}

/// `a p² + b p` over the box `[p_min, p_max]`, per time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// $/MW²h
    pub quadratic_cost: f64,
    /// $/MWh
    pub linear_cost: f64,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
}

/// Terminal injection pinned to `p_load`. Consumption is negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedLoadParams {
    pub p_load: Vec<f64>,
}

/// Lossless line under the DC approximation. A zero susceptance models an open line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcLineParams {
    /// MW
    pub capacity: f64,
    /// MW/rad
    pub susceptance: f64,
}

/// Controllable two-terminal link with no phase coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcLineParams {
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// $/MWh discharged
    pub discharge_cost: f64,
    /// Charging efficiency in (0, 1].
    pub efficiency: f64,
    /// MW
    pub power_capacity: f64,
    /// Hours of storage at full power.
    pub duration: f64,
}

/// Parameters of a whole type group, one entry per device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "devices", rename_all = "snake_case")]
pub enum GroupParams {
    Generator(Vec<GeneratorParams>),
    FixedLoad(Vec<FixedLoadParams>),
    AcLine(Vec<AcLineParams>),
    DcLine(Vec<DcLineParams>),
    Battery(Vec<BatteryParams>),
    GenericQp(Vec<QpDeviceForm>),
}

/// Parameters of a single device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceParams {
    Generator(GeneratorParams),
    FixedLoad(FixedLoadParams),
    AcLine(AcLineParams),
    DcLine(DcLineParams),
    Battery(BatteryParams),
    GenericQp(QpDeviceForm),
}

impl DeviceParams {
    pub fn kind(&self) -> DeviceKind {
        match self {
            DeviceParams::Generator(_) => DeviceKind::Generator,
            DeviceParams::FixedLoad(_) => DeviceKind::FixedLoad,
            DeviceParams::AcLine(_) => DeviceKind::AcLine,
            DeviceParams::DcLine(_) => DeviceKind::DcLine,
            DeviceParams::Battery(_) => DeviceKind::Battery,
            DeviceParams::GenericQp(_) => DeviceKind::GenericQp,
        }
    }
}

impl GroupParams {
    pub fn kind(&self) -> DeviceKind {
        match self {
            GroupParams::Generator(_) => DeviceKind::Generator,
            GroupParams::FixedLoad(_) => DeviceKind::FixedLoad,
            GroupParams::AcLine(_) => DeviceKind::AcLine,
            GroupParams::DcLine(_) => DeviceKind::DcLine,
            GroupParams::Battery(_) => DeviceKind::Battery,
            GroupParams::GenericQp(_) => DeviceKind::GenericQp,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GroupParams::Generator(v) => v.len(),
            GroupParams::FixedLoad(v) => v.len(),
            GroupParams::AcLine(v) => v.len(),
            GroupParams::DcLine(v) => v.len(),
            GroupParams::Battery(v) => v.len(),
            GroupParams::GenericQp(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn device(&self, d: usize) -> Option<DeviceParams> {
        Some(match self {
            GroupParams::Generator(v) => DeviceParams::Generator(v.get(d)?.clone()),
            GroupParams::FixedLoad(v) => DeviceParams::FixedLoad(v.get(d)?.clone()),
            GroupParams::AcLine(v) => DeviceParams::AcLine(v.get(d)?.clone()),
            GroupParams::DcLine(v) => DeviceParams::DcLine(v.get(d)?.clone()),
            GroupParams::Battery(v) => DeviceParams::Battery(v.get(d)?.clone()),
            GroupParams::GenericQp(v) => DeviceParams::GenericQp(v.get(d)?.clone()),
        })
    }

    /// Replaces device `d`'s parameters. Returns false on kind mismatch or bad index.
    pub fn set_device(&mut self, d: usize, params: DeviceParams) -> bool {
        macro_rules! put {
            ($v:expr, $p:expr) => {
                match $v.get_mut(d) {
                    Some(slot) => {
                        *slot = $p;
                        true
                    }
                    None => false,
                }
            };
        }
        match (self, params) {
            (GroupParams::Generator(v), DeviceParams::Generator(p)) => put!(v, p),
            (GroupParams::FixedLoad(v), DeviceParams::FixedLoad(p)) => put!(v, p),
            (GroupParams::AcLine(v), DeviceParams::AcLine(p)) => put!(v, p),
            (GroupParams::DcLine(v), DeviceParams::DcLine(p)) => put!(v, p),
            (GroupParams::Battery(v), DeviceParams::Battery(p)) => put!(v, p),
            (GroupParams::GenericQp(v), DeviceParams::GenericQp(p)) => put!(v, p),
            _ => false,
        }
    }
}
