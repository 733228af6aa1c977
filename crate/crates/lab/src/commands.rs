//! Subcommands: each reads a validated configuration and writes its artifacts
//! into the output directory.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use uhs_core::carleman::{geometric_s_grid, smooth_bump, sweep_family, test_field_family, FamilySweep};
use uhs_core::evolve::{solve, EvolutionProblem, Source, Span};
use uhs_core::inverse::{
    stability_experiment, InverseScenario, NoiseSpec, SourceProfile, StabilityOptions,
};
use uhs_core::ops::OperatorCoefficients;
use uhs_core::weight::{
    check_pseudoconvexity, constraint_margins, select_parameters, sign_condition_report,
};
use uhs_core::{Complex64, ComplexField, GridSpec, SpatialField, WeightParams};

use crate::config::{ExperimentConfig, Format};
use crate::error::{LabError, Result};
use crate::field_csv::write_field;
use crate::manifest::{sha256_hex, write_manifest};
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Forward,
    VerifyWeights,
    CarlemanSweep,
    InverseStability,
    Convergence,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Forward => "forward",
            Subcommand::VerifyWeights => "verify-weights",
            Subcommand::CarlemanSweep => "carleman-sweep",
            Subcommand::InverseStability => "inverse-stability",
            Subcommand::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces `[output] directory`.
    pub out: Option<PathBuf>,
    /// Replaces `[inverse] seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub directory: PathBuf,
    /// Artifacts in the order written, `manifest.json` last.
    pub files: Vec<PathBuf>,
}

/// RNG stream per use of the configured seed; the noise streams are owned by
/// the stability experiment.
const STREAM_SOURCE: u64 = 1;
const STREAM_FIELDS: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Loads `config_path`, runs `cmd` and writes the manifest.
pub fn run(cmd: Subcommand, config_path: &Path, opts: &RunOptions) -> Result<RunOutput> {
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let (mut config, bytes) = ExperimentConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        config.inverse.seed = seed;
    }
    config.validate()?;
    let dir = opts.out.clone().unwrap_or_else(|| config.output.directory.clone());
    std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let mut out = Writer {
        dir: dir.clone(),
        format: config.output.format,
        files: Vec::new(),
    };
    match cmd {
        Subcommand::Forward => forward(&config, &bytes, &mut out)?,
        Subcommand::VerifyWeights => verify_weights(&config, &mut out)?,
        Subcommand::CarlemanSweep => carleman_sweep(&config, &mut out)?,
        Subcommand::InverseStability => inverse_stability(&config, &mut out)?,
        Subcommand::Convergence => convergence(&config, &mut out)?,
    }
    let manifest = write_manifest(&dir, &bytes, cmd.name(), started_at, clock.elapsed().as_secs_f64())?;
    out.files.push(manifest);
    Ok(RunOutput {
        directory: dir,
        files: out.files,
    })
}

struct Writer {
    dir: PathBuf,
    format: Format,
    files: Vec<PathBuf>,
}

impl Writer {
    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, doc: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(doc).expect("json serializes");
        text.push('\n');
        self.text(name, &text)
    }

    /// Writes `stem.csv` or `stem.json` per the configured format.
    fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        match self.format {
            Format::Csv => self.text(&format!("{stem}.csv"), &table.to_csv()),
            Format::Json => self.json(&format!("{stem}.json"), &table.to_json()),
        }
    }
}

fn source_profile(config: &ExperimentConfig) -> SourceProfile {
    match config.inverse.source_terms {
        0 => SourceProfile::single(1),
        k => SourceProfile::random(&mut rng(config.inverse.seed, STREAM_SOURCE), k),
    }
}

fn scenario(config: &ExperimentConfig) -> Result<InverseScenario> {
    let g = &config.grid;
    Ok(InverseScenario::new(
        config.scenario_spec()?,
        &source_profile(config),
        g.nx,
        g.ny,
        g.nt,
    )?)
}

fn forward(config: &ExperimentConfig, bytes: &[u8], out: &mut Writer) -> Result<()> {
    let s = scenario(config)?;
    let tr = s.forward(1.0)?;
    let hash = sha256_hex(bytes);
    out.text(&format!("trajectory_{}.csv", &hash[..16]), &write_field(&tr.u))?;
    let mut mass = Table::new(&["it", "t", "mass"]);
    for (it, m) in tr.mass.iter().enumerate() {
        mass.push(vec![it.into(), s.grid.time(it).into(), (*m).into()]);
    }
    out.table("mass", &mass)
}

fn verify_weights(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let (g, w) = (&config.grid, &config.weight);
    let (l, eps) = (g.half_width, w.epsilon);
    let infeasible = |reason: String| {
        json!({
            "feasible": false,
            "reason": reason,
            "delta0": Value::Null,
            "margins": Value::Null,
            "chosen_alpha": Value::Null,
            "rho": Value::Null,
            "delta": Value::Null,
        })
    };
    let sel = match select_parameters(&g.x_min, &g.x_max, &w.x0, l, eps) {
        Ok(sel) => sel,
        Err(e @ uhs_core::Error::InfeasibleGeometry(_)) => {
            return out.json("verify_weights.json", &infeasible(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let grid = config.grid_spec()?;
    let params = WeightParams::new(w.x0.clone(), w.y0.clone(), sel.alpha, w.beta, w.gamma, eps)?
        .with_rho(sel.rho)?;
    let constraints = constraint_margins(&g.x_min, &g.x_max, &w.x0, &w.y0, l, eps, sel.alpha, sel.rho, sel.delta);
    let rep = sign_condition_report(&params, &grid, l)?;
    let (delta0, pc_reason) = match check_pseudoconvexity(&params, &grid) {
        Ok(pc) => (Some(pc.delta0), None),
        Err(e @ uhs_core::Error::PseudoconvexityViolated { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let feasible = constraints.all_hold() && rep.all_pass() && delta0.is_some();
    let doc = json!({
        "feasible": feasible,
        "reason": pc_reason,
        "delta0": delta0,
        "margins": {
            "lateral_end": rep.margin_lateral_end,
            "lateral": rep.margin_lateral,
            "inner_slice": rep.margin_inner_slice,
            "bands": rep.margin_bands,
            "inner_core": rep.margin_inner_core,
        },
        "passes": {
            "lateral_end": rep.pass_lateral_end,
            "lateral": rep.pass_lateral,
            "inner_slice": rep.pass_inner_slice,
            "bands": rep.pass_bands,
            "inner_core": rep.pass_inner_core,
            "band_clearance": rep.pass_band_clearance,
        },
        "chosen_alpha": sel.alpha,
        "alpha_interval": [sel.alpha_interval.0, sel.alpha_interval.1],
        "configured_alpha": w.alpha,
        "rho": sel.rho,
        "delta": rep.delta,
        "selection_delta": sel.delta,
        "y0_radius": sel.y0_radius,
        "constraints": {
            "rho_ratio": constraints.rho_ratio,
            "inner_ball": constraints.inner_ball,
            "outer": constraints.outer,
            "alpha_squared": constraints.alpha_squared,
            "y0_room": constraints.y0_room,
            "cutoff_room": constraints.cutoff_room,
        },
    });
    out.json("verify_weights.json", &doc)
}

/// Compact bump with random centre, radii and plane-wave modulation; its
/// support stays inside the box, so it is admissible.
fn random_bump(grid: &GridSpec, rng: &mut ChaCha8Rng, label: &str) -> Result<ComplexField> {
    let mut axis = |lo: f64, hi: f64| {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let centre = mid + rng.gen_range(-0.2..0.2) * half;
        let radius = rng.gen_range(0.5..0.7) * half;
        (centre, radius)
    };
    let xs: Vec<(f64, f64)> = (0..grid.n()).map(|i| axis(grid.x_min()[i], grid.x_max()[i])).collect();
    let ys: Vec<(f64, f64)> = (0..grid.m()).map(|_| axis(-grid.half_width(), grid.half_width())).collect();
    let ts = axis(-grid.horizon(), grid.horizon());
    let kx: Vec<f64> = (0..grid.n()).map(|_| rng.gen_range(-2.0 * PI..2.0 * PI)).collect();
    let ky: Vec<f64> = (0..grid.m()).map(|_| rng.gen_range(-PI..PI)).collect();
    let omega = rng.gen_range(-5.0..5.0);
    Ok(ComplexField::from_fn(grid, label, |x, y, t| {
        let mut amp = smooth_bump(t, ts.0, ts.1);
        let mut phase = -omega * t;
        for (i, &(c, r)) in xs.iter().enumerate() {
            amp *= smooth_bump(x[i], c, r);
            phase += kx[i] * x[i];
        }
        for (j, &(c, r)) in ys.iter().enumerate() {
            amp *= smooth_bump(y[j], c, r);
            phase += ky[j] * y[j];
        }
        Complex64::new(phase.cos(), phase.sin()) * amp
    })?)
}

fn family_summary(sweep: &FamilySweep) -> Value {
    let at = |k: Option<usize>| k.map(|k| sweep.s_values[k]);
    json!({
        "gamma": sweep.gamma,
        "s_values": sweep.s_values,
        "envelope": sweep.envelope,
        "empirical_C": sweep.empirical_c,
        "argmax_s": at(sweep.argmax),
        "max_before_right_end": sweep.max_before_right_end(),
        "bounds_all": sweep.bounds_all(),
        "fields": sweep.reports.iter().map(|r| json!({
            "label": r.label,
            "empirical_C": r.empirical_c,
            "argmax_s": r.argmax.map(|k| r.s_values[k]),
            "admissible": r.admissibility.pass,
            "degenerate": r.degenerate,
            "violations": r.violations,
            "notes": r.notes(),
        })).collect::<Vec<_>>(),
    })
}

fn carleman_sweep(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let grid = config.grid_spec()?;
    let c = &config.carleman;
    let s_grid = geometric_s_grid(c.s_min, c.s_max, c.s_count)?;
    let mut fields = test_field_family(&grid)?;
    let mut r = rng(config.inverse.seed, STREAM_FIELDS);
    for k in 0..c.random_fields {
        fields.push(random_bump(&grid, &mut r, &format!("random_bump_{k}"))?);
    }
    let pairs: Vec<(ComplexField, OperatorCoefficients)> = fields
        .into_iter()
        .map(|u| (u, OperatorCoefficients::free(&grid)))
        .collect();
    let base = config.weight_params()?;
    let mut summary = Vec::new();
    for &gamma in &c.gamma_list {
        let sweep = sweep_family(&pairs, &base.with_gamma(gamma)?, &s_grid)?;
        for rep in &sweep.reports {
            let mut t = Table::new(&["s", "lhs", "rhs_interior", "rhs_boundary", "ratio"]);
            for k in 0..s_grid.len() {
                t.push(vec![
                    s_grid[k].into(),
                    rep.lhs[k].into(),
                    rep.rhs_interior[k].into(),
                    rep.rhs_boundary[k].into(),
                    rep.ratio[k].into(),
                ]);
            }
            out.table(&format!("carleman_gamma{gamma}_{}", rep.label), &t)?;
        }
        summary.push(family_summary(&sweep));
    }
    out.json("carleman_summary.json", &Value::Array(summary))
}

fn inverse_stability(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let s = scenario(config)?;
    let inv = &config.inverse;
    let options = StabilityOptions {
        hoelder_c: inv.hoelder_c,
        noise: (inv.noise_level > 0.0).then_some(NoiseSpec {
            level: inv.noise_level,
            seed: inv.seed,
        }),
    };
    let result = stability_experiment(&s, &inv.amplitudes, &options)?;
    let mut t = Table::new(&["amplitude", "d", "f_norm", "M", "theta_fit", "C_fit", "bound", "passed"]);
    for r in &result.records {
        t.push(vec![
            r.amplitude.into(),
            r.d.into(),
            r.f_norm.into(),
            r.m.into(),
            r.theta_fit.into(),
            r.c_fit.into(),
            r.fitted_bound.into(),
            r.passed.into(),
        ]);
    }
    out.table("inverse_stability", &t)?;
    let f = &result.fit;
    let doc = json!({
        "theta_raw": f.theta_raw,
        "theta_fit": f.theta_fit,
        "c_lsq": f.c_lsq,
        "C_fit": f.c_fit,
        "clamped": f.clamped,
        "points": f.points,
        "all_passed": result.all_passed(),
        "noise_level": inv.noise_level,
        "seed": inv.seed,
        "hoelder_c": inv.hoelder_c,
        "records": result.records.iter().map(|r| json!({
            "amplitude": r.amplitude,
            "kappa1": r.kappa1,
            "kappa2": r.kappa2,
            "kappa": r.kappa,
            "s_star": r.s_star,
            "hoelder_bound": r.bound_value,
        })).collect::<Vec<_>>(),
    });
    out.json("inverse_stability_summary.json", &doc)
}

/// `u = e^{−it} ∏ sin(πξᵢ) ∏ cos(πyⱼ/2L)` with constant potential `p₀`, so
/// `Au = (1 − m(π/2L)² + Σ(π/|Dᵢ|)² − p₀) u`.
fn convergence(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let g = &config.grid;
    let p0 = config.convergence.potential;
    let ky = PI / (2.0 * g.half_width);
    let kx: Vec<f64> = g.x_min.iter().zip(&g.x_max).map(|(a, b)| PI / (b - a)).collect();
    let coeff = 1.0 - g.m as f64 * ky * ky + kx.iter().map(|k| k * k).sum::<f64>() - p0;
    let exact = |x: &[f64], y: &[f64], t: f64| {
        let sx: f64 = (0..x.len()).map(|i| (kx[i] * (x[i] - g.x_min[i])).sin()).product();
        let cy: f64 = y.iter().map(|v| (ky * v).cos()).product();
        Complex64::new(0.0, -t).exp() * (sx * cy)
    };
    let mut t = Table::new(&["level", "nx", "ny", "nt", "h", "dt", "error", "order"]);
    let mut prev: Option<f64> = None;
    for &n in &config.convergence.levels {
        let grid = GridSpec::new(g.x_min.clone(), g.x_max.clone(), g.m, g.half_width, g.horizon, n, n, n)?;
        let source = ComplexField::from_fn(&grid, "g", |x, y, t| exact(x, y, t) * coeff)?;
        let u = solve(&EvolutionProblem {
            coeffs: OperatorCoefficients::from_potential(SpatialField::constant(&grid, Complex64::new(p0, 0.0))),
            initial: SpatialField::from_fn(&grid, |x, y| exact(x, y, 0.0))?,
            source: Source::Field(source),
            span: Span::Both,
        })?
        .u;
        let truth = ComplexField::from_fn(&grid, "u", exact)?;
        let error = u.combine(Complex64::new(1.0, 0.0), &truth, Complex64::new(-1.0, 0.0))?.l2_norm();
        let hx = kx.iter().map(|k| PI / k).fold(0.0, f64::max) / (n - 1) as f64;
        let h = hx.max(2.0 * g.half_width / (n - 1) as f64);
        let order: Cell = prev.map(|e| (e / error).log2()).into();
        t.push(vec![n.into(), n.into(), n.into(), n.into(), h.into(), grid.dt().into(), error.into(), order]);
        prev = Some(error);
    }
    out.table("convergence", &t)
}
