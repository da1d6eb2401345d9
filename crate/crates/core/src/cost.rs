//! Objectives `v(x_{:T}, u_{:T})`.
//!
//! Two forms are supported: a general terminal objective evaluated on a full
//! observation path and decision history, and an additive lag-`ℓ` objective
//!
//! ```text
//! v(x, u) = Σ_{t=1}^{T} γ^{t-1} c_t(x_{t-ℓ:t}, u_{t-ℓ:t-1})
//! ```
//!
//! Closures implement [`Objective`] and [`StageCost`] directly; the JSON form
//! uses a small expression language ([`Expr`]), lookup tables or builtins.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("discount factor {0} outside (-1, 1)")]
    Gamma(f64),
    #[error("cost form `{0}` is missing field `{1}`")]
    MissingField(&'static str, &'static str),
    #[error("unknown cost form `{0}`")]
    UnknownForm(String),
    #[error("{0}")]
    Invalid(String),
    #[error("objective is not finite ({value}) at leaf {leaf}")]
    NonFinite { leaf: usize, value: f64 },
    #[error("full grid evaluation needs {count} evaluations, cap is {cap}")]
    TooLarge { count: u128, cap: u128 },
}

/// General objective on a full path `x_{:T}` and decision history `u_{:T}`.
pub trait Objective: Send + Sync {
    fn eval(&self, xs: &[&[f64]], us: &[&[f64]]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[&[f64]], &[&[f64]]) -> f64 + Send + Sync,
{
    fn eval(&self, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        self(xs, us)
    }
}

/// Stage cost `c_t` on the windows `x_{t-ℓ:t}` and `u_{t-ℓ:t-1}`, oldest entry
/// first; windows are truncated at stage 0.
pub trait StageCost: Send + Sync {
    fn eval(&self, t: usize, xs: &[&[f64]], us: &[&[f64]]) -> f64;
}

impl<F> StageCost for F
where
    F: Fn(usize, &[&[f64]], &[&[f64]]) -> f64 + Send + Sync,
{
    fn eval(&self, t: usize, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        self(t, xs, us)
    }
}

/// Declared local Hölder data: `|v(x,u) - v(x,u')| ≤ C ‖u-u'‖^α` for `‖u-u'‖ ≤ δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderData {
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl HolderData {
    pub fn bound(&self, distance: f64) -> f64 {
        self.c * distance.powf(self.alpha)
    }
}

#[derive(Clone)]
pub struct AdditiveCost {
    gamma: f64,
    lag: usize,
    stage_cost: Arc<dyn StageCost>,
}

impl fmt::Debug for AdditiveCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveCost")
            .field("gamma", &self.gamma)
            .field("lag", &self.lag)
            .finish_non_exhaustive()
    }
}

impl AdditiveCost {
    pub fn new(gamma: f64, lag: usize, stage_cost: impl StageCost + 'static) -> Result<Self, CostError> {
        if !(gamma > -1.0 && gamma < 1.0) {
            return Err(CostError::Gamma(gamma));
        }
        Ok(Self { gamma, lag, stage_cost: Arc::new(stage_cost) })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// `c_t` evaluated on the windows cut from a full path/history
    /// (`xs` through at least stage `t`, `us` through at least `t-1`).
    pub fn stage(&self, t: usize, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        let start = t.saturating_sub(self.lag);
        self.stage_cost.eval(t, &xs[start..=t], &us[start..t])
    }

    /// `Σ_{i=1}^{t} γ^{i-1} c_i` along the given path and history.
    pub fn partial_sum(&self, t: usize, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        let mut acc = 0.0;
        let mut discount = 1.0;
        for i in 1..=t {
            acc += discount * self.stage(i, xs, us);
            discount *= self.gamma;
        }
        acc
    }
}

#[derive(Clone)]
pub enum CostForm {
    General(Arc<dyn Objective>),
    Additive(AdditiveCost),
}

/// Objective of a multistage problem, optionally with declared Hölder data.
#[derive(Clone)]
pub struct CostSpec {
    form: CostForm,
    holder: Option<HolderData>,
    source: Option<CostJson>,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            CostForm::General(_) => "general".to_string(),
            CostForm::Additive(a) => format!("{a:?}"),
        };
        f.debug_struct("CostSpec")
            .field("form", &form)
            .field("holder", &self.holder)
            .finish_non_exhaustive()
    }
}

impl CostSpec {
    pub fn general(objective: impl Objective + 'static) -> Self {
        Self { form: CostForm::General(Arc::new(objective)), holder: None, source: None }
    }

    pub fn additive(cost: AdditiveCost) -> Self {
        Self { form: CostForm::Additive(cost), holder: None, source: None }
    }

    pub fn with_holder(mut self, holder: HolderData) -> Self {
        self.holder = Some(holder);
        if let Some(src) = &mut self.source {
            src.holder = Some(holder);
        }
        self
    }

    pub fn form(&self) -> &CostForm {
        &self.form
    }

    pub fn holder(&self) -> Option<HolderData> {
        self.holder
    }

    pub fn as_additive(&self) -> Option<&AdditiveCost> {
        match &self.form {
            CostForm::Additive(a) => Some(a),
            CostForm::General(_) => None,
        }
    }

    /// The JSON this cost was built from, if any.
    pub fn source(&self) -> Option<&CostJson> {
        self.source.as_ref()
    }

    /// `v(x_{:T}, u_{:T})`; the additive form is expanded term by term.
    pub fn eval(&self, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        match &self.form {
            CostForm::General(f) => f.eval(xs, us),
            CostForm::Additive(a) => a.partial_sum(xs.len() - 1, xs, us),
        }
    }

    pub fn from_json(json: CostJson) -> Result<Self, CostError> {
        let mut spec = match json.form.as_str() {
            "general" => {
                let objective = json
                    .objective
                    .clone()
                    .ok_or(CostError::MissingField("general", "objective"))?;
                objective.check(false)?;
                CostSpec::general(move |xs: &[&[f64]], us: &[&[f64]]| objective.eval(Frame::Full, xs, us))
            }
            "additive" => {
                let gamma = json.gamma.ok_or(CostError::MissingField("additive", "gamma"))?;
                let lag = json.lag.ok_or(CostError::MissingField("additive", "lag"))?;
                let stage_costs = json
                    .stage_costs
                    .clone()
                    .ok_or(CostError::MissingField("additive", "stage_costs"))?;
                if stage_costs.is_empty() {
                    return Err(CostError::Invalid("stage_costs must not be empty".into()));
                }
                for c in &stage_costs {
                    c.check(true)?;
                }
                let cost = AdditiveCost::new(gamma, lag, move |t: usize, xs: &[&[f64]], us: &[&[f64]]| {
                    let f = if stage_costs.len() == 1 {
                        &stage_costs[0]
                    } else {
                        match stage_costs.get(t - 1) {
                            Some(f) => f,
                            None => return f64::NAN,
                        }
                    };
                    f.eval(Frame::Window { t }, xs, us)
                })?;
                CostSpec::additive(cost)
            }
            other => return Err(CostError::UnknownForm(other.to_string())),
        };
        spec.holder = json.holder;
        spec.source = Some(json);
        Ok(spec)
    }
}

/// JSON form of a [`CostSpec`].
///
/// `{"form": "general", "objective": F}` or
/// `{"form": "additive", "gamma": γ, "lag": ℓ, "stage_costs": [F, ...]}` where a
/// single stage cost applies to every stage and a list of `T` entries gives
/// `c_1, …, c_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostJson {
    pub form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<FunctionJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_costs: Option<Vec<FunctionJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<HolderData>,
}

impl CostJson {
    pub fn general(objective: FunctionJson) -> Self {
        Self { form: "general".into(), objective: Some(objective), gamma: None, lag: None, stage_costs: None, holder: None }
    }

    pub fn additive(gamma: f64, lag: usize, stage_costs: Vec<FunctionJson>) -> Self {
        Self {
            form: "additive".into(),
            objective: None,
            gamma: Some(gamma),
            lag: Some(lag),
            stage_costs: Some(stage_costs),
            holder: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Frame {
    /// Variables addressed by absolute stage.
    Full,
    /// Variables addressed by lag back from the current stage `t`.
    Window { t: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionJson {
    Expr(Expr),
    Table(Table),
    Builtin(BuiltinObjective),
}

impl FunctionJson {
    fn check(&self, window: bool) -> Result<(), CostError> {
        match self {
            FunctionJson::Expr(e) => e.check(window),
            FunctionJson::Table(_) => Ok(()),
            FunctionJson::Builtin(_) if window => {
                Err(CostError::Invalid("builtin objectives cannot be used as stage costs".into()))
            }
            FunctionJson::Builtin(_) => Ok(()),
        }
    }

    fn eval(&self, frame: Frame, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        match self {
            FunctionJson::Expr(e) => e.eval(frame, xs, us),
            FunctionJson::Table(t) => t.lookup(xs, us),
            FunctionJson::Builtin(b) => b.eval(xs, us),
        }
    }
}

/// Reference to one component of an observation or decision.
///
/// In a general objective `stage` is absolute. In a stage cost `lag` counts
/// back from the current stage `t`: `x` with lag 0 is `x_t`, `u` with lag 1 is
/// `u_{t-1}`. References before stage 0 read as 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    #[serde(default)]
    pub comp: usize,
}

impl VarRef {
    pub fn stage(stage: usize) -> Self {
        Self { stage: Some(stage), lag: None, comp: 0 }
    }

    pub fn lag(lag: usize) -> Self {
        Self { stage: None, lag: Some(lag), comp: 0 }
    }

    pub fn comp(mut self, comp: usize) -> Self {
        self.comp = comp;
        self
    }

    fn read(&self, frame: Frame, seq: &[&[f64]], is_decision: bool) -> f64 {
        let index = match frame {
            Frame::Full => self.stage,
            Frame::Window { t } => {
                let lag = self.lag.unwrap_or(0);
                if lag > t {
                    return 0.0;
                }
                // x window ends at x_t, u window ends at u_{t-1}
                let end = if is_decision { t } else { t + 1 };
                let start = end - seq.len();
                (t - lag).checked_sub(start)
            }
        };
        index
            .and_then(|i| seq.get(i))
            .and_then(|v| v.get(self.comp))
            .copied()
            .unwrap_or(f64::NAN)
    }
}

/// Arithmetic expression over observations and decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    X(VarRef),
    U(VarRef),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Pow(Box<Expr>, f64),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
}

impl Expr {
    pub fn x(stage: usize) -> Self {
        Expr::X(VarRef::stage(stage))
    }

    pub fn u(stage: usize) -> Self {
        Expr::U(VarRef::stage(stage))
    }

    pub fn x_lag(lag: usize) -> Self {
        Expr::X(VarRef::lag(lag))
    }

    pub fn u_lag(lag: usize) -> Self {
        Expr::U(VarRef::lag(lag))
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, p: f64) -> Self {
        Expr::Pow(Box::new(a), p)
    }

    pub fn abs(a: Expr) -> Self {
        Expr::Abs(Box::new(a))
    }

    fn check(&self, window: bool) -> Result<(), CostError> {
        match self {
            Expr::Const(_) => Ok(()),
            Expr::X(v) | Expr::U(v) => {
                let ok = if window {
                    v.stage.is_none() && v.lag.is_some()
                } else {
                    v.stage.is_some() && v.lag.is_none()
                };
                if !ok {
                    let want = if window { "`lag`" } else { "`stage`" };
                    return Err(CostError::Invalid(format!("variable reference must use {want} here")));
                }
                if window && matches!(self, Expr::U(_)) && v.lag == Some(0) {
                    return Err(CostError::Invalid("stage costs cannot read u_t (lag 0)".into()));
                }
                Ok(())
            }
            Expr::Add(es) | Expr::Mul(es) | Expr::Min(es) | Expr::Max(es) => {
                if matches!(self, Expr::Min(_) | Expr::Max(_)) && es.is_empty() {
                    return Err(CostError::Invalid("min/max need at least one argument".into()));
                }
                es.iter().try_for_each(|e| e.check(window))
            }
            Expr::Sub(a, b) => {
                a.check(window)?;
                b.check(window)
            }
            Expr::Neg(a) | Expr::Abs(a) | Expr::Pow(a, _) => a.check(window),
        }
    }

    fn eval(&self, frame: Frame, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X(v) => v.read(frame, xs, false),
            Expr::U(v) => v.read(frame, us, true),
            Expr::Add(es) => es.iter().map(|e| e.eval(frame, xs, us)).sum(),
            Expr::Mul(es) => es.iter().map(|e| e.eval(frame, xs, us)).product(),
            Expr::Sub(a, b) => a.eval(frame, xs, us) - b.eval(frame, xs, us),
            Expr::Neg(a) => -a.eval(frame, xs, us),
            Expr::Abs(a) => a.eval(frame, xs, us).abs(),
            Expr::Pow(a, p) => {
                let base = a.eval(frame, xs, us);
                if p.fract() == 0.0 && p.abs() < 64.0 {
                    base.powi(*p as i32)
                } else {
                    base.powf(*p)
                }
            }
            Expr::Min(es) => es.iter().map(|e| e.eval(frame, xs, us)).fold(f64::INFINITY, f64::min),
            Expr::Max(es) => es.iter().map(|e| e.eval(frame, xs, us)).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Lookup table keyed by the flattened observation and decision arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub entries: Vec<TableEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub value: f64,
}

const TABLE_KEY_TOL: f64 = 1e-9;

impl Table {
    fn lookup(&self, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        let matches = |key: &[f64], parts: &[&[f64]]| {
            let mut flat = parts.iter().flat_map(|p| p.iter());
            key.len() == parts.iter().map(|p| p.len()).sum::<usize>()
                && key.iter().all(|k| flat.next().is_some_and(|v| (k - v).abs() <= TABLE_KEY_TOL))
        };
        self.entries
            .iter()
            .find(|e| matches(&e.x, xs) && matches(&e.u, us))
            .map(|e| e.value)
            .or(self.default)
            .unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinObjective {
    /// `Σ_t Σ_k u_t[k]`.
    SumDecisions,
    /// `Σ_t ‖u_t - x_t‖²` over the common components.
    SquaredTracking,
    /// `Σ_t Σ_k |u_t[k] - x_t[k]|^exponent`.
    AbsTracking { exponent: f64 },
}

impl BuiltinObjective {
    fn eval(&self, xs: &[&[f64]], us: &[&[f64]]) -> f64 {
        let pairs = || {
            xs.iter()
                .zip(us)
                .flat_map(|(x, u)| x.iter().zip(u.iter()).map(|(a, b)| b - a))
        };
        match self {
            BuiltinObjective::SumDecisions => us.iter().flat_map(|u| u.iter()).sum(),
            BuiltinObjective::SquaredTracking => pairs().map(|d| d * d).sum(),
            BuiltinObjective::AbsTracking { exponent } => pairs().map(|d| d.abs().powf(*exponent)).sum(),
        }
    }
}
