//! Acceptance thresholds.

/// max |M(t) - M(0) - int Pi| / int |Pi_diss| over one periodic beat.
pub const BALANCE_NORMALIZED: f64 = 1e-3;
/// Defect ratio when the analysis stride is halved, target 4.
pub const BALANCE_RATIO: f64 = 4.0;
pub const BALANCE_RATIO_BAND: f64 = 0.5;
/// Wall-clock budget for the default run plus its analysis [s].
pub const DEFAULT_RUN_SECONDS: f64 = 10.0;

/// Relative total-volume drift per beat.
pub const VOLUME_DRIFT_PER_BEAT: f64 = 1e-10;

pub const PERIODICITY: f64 = 1e-4;
/// |W_act + W_diss| / W_act at periodic regime.
pub const WORK_BALANCE: f64 = 1e-2;
/// |int Pi_ex| / int |Pi_diss| over a periodic beat.
pub const EXTERNAL_WORK: f64 = 1e-6;

/// Coupled vs monolithic, relative max-norm on V_LV and p_LV.
pub const COUPLING_MATCH: f64 = 1e-3;
/// |V_0D - V_chamber| at every accepted step [mL].
pub const COUPLING_CONSTRAINT: f64 = 1e-8;

/// Chamber vs fluid boundary work relative to int |Pi_diss|.
pub const POWER_IDENTITY: f64 = 1e-3;

pub const SUB_BALANCE: f64 = 1e-12;
pub const RANDOM_STATES: usize = 1000;

pub const ORDER_BAND: f64 = 0.3;

/// Activation support must stay below this fraction of the beat.
pub const ACTIVE_SUPPORT_MAX: f64 = 0.25;
/// Dissipation must be nonzero over more than this fraction.
pub const DISSIPATION_SUPPORT_MIN: f64 = 0.9;
/// Fraction of the peak that counts as "on".
pub const SUPPORT_LEVEL: f64 = 0.05;
