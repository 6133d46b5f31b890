use std::path::PathBuf;

use jumpform::model::{KernelKind, ModelSpec, PotentialSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Criteria,
    Gap,
    Lyapunov,
    Superpc,
    Concentration,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Criteria => "criteria",
            Command::Gap => "gap",
            Command::Lyapunov => "lyapunov",
            Command::Superpc => "superpc",
            Command::Concentration => "concentration",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    /// `β(s) = 1 + 1/s`
    OnePlusInverse,
    Constant(f64),
}

impl BetaSpec {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            BetaSpec::OnePlusInverse => 1.0 + 1.0 / s,
            BetaSpec::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numeric {
    #[serde(rename = "L")]
    pub l: f64,
    pub h: f64,
    #[serde(rename = "L_list")]
    pub l_list: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub s_list: Vec<f64>,
    pub tol: f64,
    pub dense_cap: usize,
    pub deterministic: bool,
    pub threads: Option<usize>,
    pub max_iter: usize,
    /// Super-Poincaré rate constants.
    pub c2: f64,
    pub c3: f64,
    /// Radii of the table behind `Φ^{-1}`.
    pub phi_table_max: f64,
    pub phi_table_points: usize,
    /// Exponent of the large-jump Lyapunov function; defaults to `α/2`.
    pub alpha0: Option<f64>,
    pub jump_cutoff: f64,
    pub domain_radius: f64,
    pub beta: BetaSpec,
    /// Radii for local Poincaré constants; skipped when empty.
    pub local_r: Vec<f64>,
    /// Exponents `λ` for `μ_V(e^{λ|x|})`.
    pub moment_lambdas: Vec<f64>,
}

impl Default for Numeric {
    fn default() -> Self {
        Numeric {
            l: 10.0,
            h: 0.1,
            l_list: vec![10.0, 20.0, 40.0],
            r_grid: (2..=50).map(f64::from).collect(),
            s_list: (0..25)
                .map(|i| 10f64.powf(-6.0 + 5.0 * i as f64 / 24.0))
                .collect(),
            tol: 1e-10,
            dense_cap: 2000,
            deterministic: true,
            threads: None,
            max_iter: 20_000,
            c2: 1.0,
            c3: 1.0,
            phi_table_max: 1e15,
            phi_table_points: 600,
            alpha0: None,
            jump_cutoff: 1e4,
            domain_radius: 1.0,
            beta: BetaSpec::OnePlusInverse,
            local_r: Vec::new(),
            moment_lambdas: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            dir: PathBuf::from("."),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelSpec,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub numeric: Numeric,
    #[serde(default)]
    pub output: Output,
}

fn increasing_positive(name: &str, v: &[f64], min_len: usize) -> Result<(), String> {
    if v.len() < min_len {
        return Err(format!("{name} needs at least {min_len} entries"));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(format!(
            "{name} must be positive, finite and strictly increasing"
        ));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every numeric field against the preconditions of the
    /// operations the command will call.
    pub fn validate(&self) -> Result<(), String> {
        self.model.validate().map_err(|e| format!("model: {e}"))?;
        self.potential
            .validate()
            .map_err(|e| format!("potential: {e}"))?;
        if self.model.d != self.potential.dim {
            return Err(format!(
                "model dimension {} differs from potential dimension {}",
                self.model.d, self.potential.dim
            ));
        }
        let n = &self.numeric;
        if !(n.h > 0.0 && n.h.is_finite()) {
            return Err(format!("h = {} must be positive", n.h));
        }
        if !(n.l >= n.h && n.l.is_finite()) {
            return Err(format!("L = {} must be finite and at least h", n.l));
        }
        increasing_positive("L_list", &n.l_list, 3)?;
        if n.l_list[0] < n.h {
            return Err("L_list entries must be at least h".into());
        }
        increasing_positive("r_grid", &n.r_grid, 2)?;
        if n.r_grid[0] < 1.0 {
            return Err("r_grid must start at >= 1".into());
        }
        increasing_positive("s_list", &n.s_list, 1)?;
        if !(n.tol > 0.0 && n.tol < 1.0) {
            return Err(format!("tol = {} must lie in (0, 1)", n.tol));
        }
        if n.dense_cap < 2 || n.max_iter == 0 {
            return Err("dense_cap must be >= 2 and max_iter >= 1".into());
        }
        if n.threads == Some(0) {
            return Err("threads must be >= 1".into());
        }
        if !(n.c2 > 0.0 && n.c3 > 0.0) {
            return Err("c2 and c3 must be positive".into());
        }
        if !(n.phi_table_max > 1.0) || n.phi_table_points < 2 {
            return Err("phi table needs phi_table_max > 1 and >= 2 points".into());
        }
        if let Some(a0) = n.alpha0 {
            if !(a0 > 0.0 && a0 < self.model.alpha) {
                return Err(format!("alpha0 = {a0} must lie in (0, alpha)"));
            }
        }
        if !(n.jump_cutoff > self.model.range_cut && n.jump_cutoff.is_finite()) {
            return Err("jump_cutoff must exceed the kernel range cut".into());
        }
        if !(n.domain_radius > 0.0 && n.domain_radius.is_finite()) {
            return Err("domain_radius must be positive".into());
        }
        if let BetaSpec::Constant(c) = n.beta {
            if !(c > 0.0 && c.is_finite()) {
                return Err(format!("constant beta = {c} must be positive"));
            }
        }
        if !n.local_r.is_empty() {
            increasing_positive("local_r", &n.local_r, 1)?;
            if self.model.kernel == KernelKind::LargeJump && n.local_r[0] <= 3.0 {
                return Err("large-jump local constants need local_r > 3".into());
            }
        }
        if n.moment_lambdas.iter().any(|v| !v.is_finite()) {
            return Err("moment_lambdas must be finite".into());
        }
        if self.output.formats.is_empty() {
            return Err("output.formats must name csv and/or json".into());
        }
        if matches!(self.command, Command::Lyapunov | Command::Report) && n.r_grid[0] < 2.0 {
            return Err("drift checks need r_grid starting at >= 2".into());
        }
        Ok(())
    }

    /// Runs deterministically when asked to or when limited to one thread.
    pub fn deterministic(&self) -> bool {
        self.numeric.deterministic || self.numeric.threads == Some(1)
    }

    /// First 8 hex digits of the SHA-256 of the normalized config.
    pub fn hash8(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..8].to_string()
    }
}
