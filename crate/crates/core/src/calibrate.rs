//! Fitting the physical parameters the measurements leave open (Raman
//! coefficient, filter skirt, return losses, PLSu slope and the protocol
//! rate scale) to per-load observations of QBER, key rate and reflected
//! power.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::document::{ScenarioDocument, Toggles};
use crate::error::{Error, Result};
use crate::gpon::PlsuPolicy;
use crate::model::{Evaluation, Model, Tunables};
use crate::noise::RamanModel;
use crate::optimize::{multi_start, NelderMeadOptions};
use crate::physics::Physics;

/// Number of fitted parameters.
pub const DIM: usize = 8;

/// Residual assigned to an observable the model cannot produce.
pub const FAILURE_RESIDUAL: f64 = 1e3;

/// Key rates below this are treated as "no key" when taking logs.
const SKR_FLOOR_BPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationParams {
    pub raman_rho: f64,
    pub bpf_floor_isolation_db: f64,
    pub bpf_edge_slope_db_per_nm: f64,
    pub splitter_return_loss_db: f64,
    pub coupler_return_loss_db: f64,
    pub connector_return_loss_db: f64,
    pub plsu_db_per_ont: f64,
    pub rate_scale: f64,
}

/// How a parameter is mapped into the optimizer's unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

/// Tolerance class used when comparing a fit with a known truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// A level in dB: compared in absolute dB.
    Decibel,
    /// Anything else: compared relatively.
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
    pub unit: Unit,
}

impl ParamSpec {
    fn normalize(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
        }
    }

    fn denormalize(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
        };
        v.clamp(self.lo, self.hi)
    }
}

/// Box bounds of the fit, in [`CalibrationParams`] field order.
pub const PARAMS: [ParamSpec; DIM] = [
    ParamSpec {
        name: "raman_rho",
        lo: 1e-11,
        hi: 1e-7,
        scale: Scale::Log,
        unit: Unit::Ratio,
    },
    ParamSpec {
        name: "bpf_floor_isolation_db",
        lo: 20.0,
        hi: 80.0,
        scale: Scale::Linear,
        unit: Unit::Decibel,
    },
    ParamSpec {
        name: "bpf_edge_slope_db_per_nm",
        lo: 5.0,
        hi: 40.0,
        scale: Scale::Linear,
        unit: Unit::Ratio,
    },
    ParamSpec {
        name: "splitter_return_loss_db",
        lo: 30.0,
        hi: 70.0,
        scale: Scale::Linear,
        unit: Unit::Decibel,
    },
    ParamSpec {
        name: "coupler_return_loss_db",
        lo: 30.0,
        hi: 70.0,
        scale: Scale::Linear,
        unit: Unit::Decibel,
    },
    ParamSpec {
        name: "connector_return_loss_db",
        lo: 30.0,
        hi: 70.0,
        scale: Scale::Linear,
        unit: Unit::Decibel,
    },
    ParamSpec {
        name: "plsu_db_per_ont",
        lo: 0.0,
        hi: 2.0,
        scale: Scale::Linear,
        unit: Unit::Ratio,
    },
    ParamSpec {
        name: "rate_scale",
        lo: 1e-3,
        hi: 10.0,
        scale: Scale::Log,
        unit: Unit::Ratio,
    },
];

impl CalibrationParams {
    pub fn to_array(&self) -> [f64; DIM] {
        [
            self.raman_rho,
            self.bpf_floor_isolation_db,
            self.bpf_edge_slope_db_per_nm,
            self.splitter_return_loss_db,
            self.coupler_return_loss_db,
            self.connector_return_loss_db,
            self.plsu_db_per_ont,
            self.rate_scale,
        ]
    }

    pub fn from_array(v: [f64; DIM]) -> Self {
        CalibrationParams {
            raman_rho: v[0],
            bpf_floor_isolation_db: v[1],
            bpf_edge_slope_db_per_nm: v[2],
            splitter_return_loss_db: v[3],
            coupler_return_loss_db: v[4],
            connector_return_loss_db: v[5],
            plsu_db_per_ont: v[6],
            rate_scale: v[7],
        }
    }

    pub fn to_unit(&self) -> Vec<f64> {
        self.to_array()
            .iter()
            .zip(&PARAMS)
            .map(|(v, s)| s.normalize(*v))
            .collect()
    }

    pub fn from_unit(u: &[f64]) -> Self {
        let mut v = [0.0; DIM];
        for (i, s) in PARAMS.iter().enumerate() {
            v[i] = s.denormalize(u[i]);
        }
        Self::from_array(v)
    }

    pub fn within_bounds(&self) -> bool {
        self.to_array()
            .iter()
            .zip(&PARAMS)
            .all(|(v, s)| *v >= s.lo && *v <= s.hi)
    }

    /// Pulls out the fitted quantities from a document. A tabulated Raman
    /// spectrum is represented by its value at the main downstream offset.
    pub fn from_document(doc: &ScenarioDocument) -> Result<Self> {
        let k = Tunables::from_document(doc)?;
        let rho = match &k.raman {
            RamanModel::Flat(r) => *r,
            table => {
                let pump = doc
                    .channels
                    .downstream_classical()
                    .next()
                    .map_or(1490.0, |c| c.wavelength_nm);
                table.rho(doc.channels.quantum_wavelength_nm() - pump)
            }
        };
        let plsu = match (&k.plsu, doc.physics.plsu_db_per_ont) {
            (PlsuPolicy::Continuous { db_per_added_ont, .. }, _) => *db_per_added_ont,
            (_, Some(v)) => v,
            _ => 0.0,
        };
        Ok(CalibrationParams {
            raman_rho: rho,
            bpf_floor_isolation_db: k.bpf.floor_isolation_db,
            bpf_edge_slope_db_per_nm: k.bpf.edge_slope_db_per_nm,
            splitter_return_loss_db: k.splitter_return_loss_db,
            coupler_return_loss_db: k.coupler_return_loss_db,
            connector_return_loss_db: k.connector_return_loss_db,
            plsu_db_per_ont: plsu,
            rate_scale: k.rate_scale,
        })
    }

    /// Overlays these values on a document's tunables.
    pub fn apply(&self, base: &Tunables) -> Tunables {
        let mut k = base.clone();
        k.raman = RamanModel::Flat(self.raman_rho);
        k.bpf.floor_isolation_db = self.bpf_floor_isolation_db;
        k.bpf.edge_slope_db_per_nm = self.bpf_edge_slope_db_per_nm;
        k.splitter_return_loss_db = self.splitter_return_loss_db;
        k.coupler_return_loss_db = self.coupler_return_loss_db;
        k.connector_return_loss_db = self.connector_return_loss_db;
        if let PlsuPolicy::Continuous { db_per_added_ont, .. } = &mut k.plsu {
            *db_per_added_ont = self.plsu_db_per_ont;
        }
        k.rate_scale = self.rate_scale;
        k
    }

    /// Writes these values into a `physics` block.
    pub fn apply_to_physics(&self, physics: &mut Physics) {
        physics.raman_rho = RamanModel::Flat(self.raman_rho);
        physics.bpf.floor_isolation_db = self.bpf_floor_isolation_db;
        physics.bpf.edge_slope_db_per_nm = self.bpf_edge_slope_db_per_nm;
        physics.splitter_return_loss_db = self.splitter_return_loss_db;
        physics.coupler_return_loss_db = self.coupler_return_loss_db;
        physics.connector_return_loss_db = self.connector_return_loss_db;
        physics.plsu_db_per_ont = Some(self.plsu_db_per_ont);
        physics.rate_scale = self.rate_scale;
    }

    /// The fitted values as a `physics` JSON fragment.
    pub fn physics_fragment(&self) -> serde_json::Value {
        serde_json::json!({
            "physics": {
                "raman_rho": self.raman_rho,
                "bpf": {
                    "floor_isolation_db": self.bpf_floor_isolation_db,
                    "edge_slope_db_per_nm": self.bpf_edge_slope_db_per_nm,
                },
                "splitter_return_loss_db": self.splitter_return_loss_db,
                "coupler_return_loss_db": self.coupler_return_loss_db,
                "connector_return_loss_db": self.connector_return_loss_db,
                "plsu_db_per_ont": self.plsu_db_per_ont,
                "rate_scale": self.rate_scale,
            }
        })
    }
}

/// One measured load level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub n_onts: usize,
    pub qber_percent: f64,
    pub skr_bps: f64,
    pub back_reflection_dbm: Option<f64>,
}

/// Residual weights: each residual is divided by its field's scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    /// Percentage points of QBER per unit residual.
    pub qber_pp: f64,
    /// Decades of key rate per unit residual.
    pub skr_log10: f64,
    /// dB of reflected power per unit residual.
    pub back_reflection_db: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            qber_pp: 0.5,
            skr_log10: 1.25f64.log10(),
            back_reflection_db: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub rows: Vec<Observation>,
    pub weights: Weights,
}

impl Observations {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Calibration("no observations".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if rows[..i].iter().any(|o| o.n_onts == r.n_onts) {
                return Err(Error::Calibration(format!("n_onts = {} appears twice", r.n_onts)));
            }
            if !(r.skr_bps > 0.0) || !(0.0..=50.0).contains(&r.qber_percent) {
                return Err(Error::Calibration(format!(
                    "row n_onts = {}: need skr_bps > 0 and qber in [0, 50] %",
                    r.n_onts
                )));
            }
        }
        Ok(Observations {
            rows,
            weights: Weights::default(),
        })
    }

    /// Reads `n_onts,qber,skr_bps,back_refl_dbm` rows; the last field may be empty.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            n_onts: usize,
            qber: f64,
            skr_bps: f64,
            back_refl_dbm: Option<f64>,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let r = rec.map_err(|e| Error::Calibration(format!("observations row {}: {e}", i + 1)))?;
            rows.push(Observation {
                n_onts: r.n_onts,
                qber_percent: r.qber,
                skr_bps: r.skr_bps,
                back_reflection_dbm: r.back_refl_dbm,
            });
        }
        Self::new(rows)
    }
}

/// Everything a residual evaluation needs besides the parameters.
#[derive(Debug, Clone)]
pub struct CalibrationContext {
    pub model: Model,
    pub base: Tunables,
    pub toggles: Toggles,
}

impl CalibrationContext {
    pub fn new(doc: &ScenarioDocument) -> Result<Self> {
        Ok(CalibrationContext {
            model: Model::compile(doc)?,
            base: Tunables::from_document(doc)?,
            toggles: doc.scenario.toggles,
        })
    }

    pub fn evaluate(&self, p: &CalibrationParams, n_onts: usize) -> Result<Evaluation> {
        let active = self.model.first(n_onts)?;
        self.model.evaluate(&p.apply(&self.base), &active, self.toggles)
    }

    /// Noiseless observations the model itself predicts at `p`.
    pub fn synthesize(&self, p: &CalibrationParams, counts: &[usize]) -> Result<Observations> {
        let rows = counts
            .iter()
            .map(|&n| {
                let e = self.evaluate(p, n)?;
                Ok(Observation {
                    n_onts: n,
                    qber_percent: e.report.qber_percent,
                    skr_bps: e.report.skr_bps,
                    back_reflection_dbm: e.back_reflection_dbm,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Observations::new(rows)
    }
}

/// Weighted residuals for one observation row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowResiduals {
    pub n_onts: usize,
    pub qber_percent: f64,
    pub skr_bps: f64,
    pub back_reflection_dbm: Option<f64>,
    pub r_qber: f64,
    pub r_skr: f64,
    pub r_back_reflection: Option<f64>,
}

impl RowResiduals {
    fn sum_sq(&self) -> f64 {
        self.r_qber.powi(2) + self.r_skr.powi(2) + self.r_back_reflection.map_or(0.0, |r| r * r)
    }
}

/// Weighted model-minus-observation residuals, one row per observation.
pub fn residuals(p: &CalibrationParams, obs: &Observations, ctx: &CalibrationContext) -> Vec<RowResiduals> {
    let w = &obs.weights;
    obs.rows
        .iter()
        .map(|o| match ctx.evaluate(p, o.n_onts) {
            Ok(e) => {
                let model_refl = e.back_reflection_dbm;
                RowResiduals {
                    n_onts: o.n_onts,
                    qber_percent: e.report.qber_percent,
                    skr_bps: e.report.skr_bps,
                    back_reflection_dbm: model_refl,
                    r_qber: (e.report.qber_percent - o.qber_percent) / w.qber_pp,
                    r_skr: if e.report.skr_bps > 0.0 {
                        (e.report.skr_bps.log10() - o.skr_bps.log10()) / w.skr_log10
                    } else {
                        -FAILURE_RESIDUAL + (SKR_FLOOR_BPS.log10() - o.skr_bps.log10()) / w.skr_log10
                    },
                    r_back_reflection: o.back_reflection_dbm.map(|target| match model_refl {
                        Some(m) => (m - target) / w.back_reflection_db,
                        None => FAILURE_RESIDUAL,
                    }),
                }
            }
            Err(_) => RowResiduals {
                n_onts: o.n_onts,
                qber_percent: f64::NAN,
                skr_bps: 0.0,
                back_reflection_dbm: None,
                r_qber: FAILURE_RESIDUAL,
                r_skr: FAILURE_RESIDUAL,
                r_back_reflection: o.back_reflection_dbm.map(|_| FAILURE_RESIDUAL),
            },
        })
        .collect()
}

/// Sum of squared weighted residuals.
pub fn objective(p: &CalibrationParams, obs: &Observations, ctx: &CalibrationContext) -> f64 {
    residuals(p, obs, ctx).iter().map(RowResiduals::sum_sq).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Objective evaluations per start.
    pub max_evals: usize,
    /// Random starts in addition to the one from `p0`.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_evals: 6000,
            restarts: 8,
            seed: 0x5eed,
        }
    }
}

/// Objective curvature along one parameter at the fitted point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub name: &'static str,
    /// Objective increase for a ±1 % move of the parameter's unit interval
    /// (mean of both directions).
    pub delta_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub params: CalibrationParams,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub best_start: usize,
    pub residuals: Vec<RowResiduals>,
    pub sensitivity: Vec<Sensitivity>,
}

/// Minimizes the weighted least-squares objective over the parameter box.
pub fn fit(
    p0: &CalibrationParams,
    obs: &Observations,
    ctx: &CalibrationContext,
    opts: &FitOptions,
) -> Result<FitReport> {
    if !p0.within_bounds() {
        return Err(Error::Calibration(format!("starting point outside the bounds: {p0:?}")));
    }
    let f = |u: &[f64]| objective(&CalibrationParams::from_unit(u), obs, ctx);
    let u0 = p0.to_unit();
    let initial_objective = f(&u0);
    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        ..Default::default()
    };
    let run = multi_start(f, &u0, opts.restarts, opts.seed, &nm);
    let (u, best) = if run.best.f <= initial_objective {
        (run.best.x.clone(), run.best.f)
    } else {
        (u0.clone(), initial_objective)
    };
    let params = CalibrationParams::from_unit(&u);

    let h = 0.01;
    let sensitivity = PARAMS
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let probe = |d: f64| {
                let mut v = u.clone();
                v[i] = (v[i] + d).clamp(0.0, 1.0);
                f(&v) - best
            };
            Sensitivity {
                name: spec.name,
                delta_objective: 0.5 * (probe(h) + probe(-h)),
            }
        })
        .collect();

    Ok(FitReport {
        params,
        objective: best,
        initial_objective,
        evaluations: run.starts.iter().map(|s| s.evals).sum(),
        converged: run.best.converged,
        best_start: run.best_start,
        residuals: residuals(&params, obs, ctx),
        sensitivity,
    })
}
