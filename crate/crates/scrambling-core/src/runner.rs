//! Experiment orchestration: resolved configurations, the four production
//! runs (TMI dynamics, epsilon sweep, thermalization diagnostics, cusp
//! study), CSV output with provenance headers, and checksummed manifests.
//!
//! Defaults are deliberately downscaled (n = 10, t_end = 200) so a casual run
//! finishes quickly; `full_scale` switches to the production sizes (n = 14,
//! t_end = 1000, averaging window [100, 1000]).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    evolve_trajectory, EvolvingState, FnObserver, Observer, PropagatorConfig, TimeGrid,
};
use crate::hilbert::{
    average_pauli, build_ising, build_sqa, Axis, HermitianOperator, IsingParams, RegisterLayout,
    SqaParams,
};
use crate::observables::{
    detect_first_cusp, local_observable_deviation, partial_trace, rdm_distance,
    time_averaged_tmi, tripartite_mutual_information_base, CuspConfig, LogBase,
    SubsystemPartition, TimeAverageWindow, TMI_SERIES,
};
use crate::spectra::{cached_full_spectrum, density_of_states, full_spectrum, thermal_rdm, Spectrum};
use crate::state::{
    energy_density, inverse_temperature_for_energy, scrambling_initial_state, BlochDirection,
    BranchPair, InitialStateSpec, ProtocolState, StateFamily,
};

/// Environment variable overriding the spectrum cache directory.
pub const CACHE_DIR_ENV: &str = "SCRAMBLE_CACHE_DIR";
/// Default spectrum cache directory (relative to the working directory).
pub const DEFAULT_CACHE_DIR: &str = "scramble-cache";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ising,
    Sqa,
}

impl Model {
    pub fn label(&self) -> &'static str {
        match self {
            Model::Ising => "ising",
            Model::Sqa => "sqa",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ising" => Ok(Model::Ising),
            "sqa" => Ok(Model::Sqa),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// One initial state in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStateConfig {
    pub family: StateFamily,
    pub theta_over_pi: f64,
    #[serde(default)]
    pub phi_over_pi: f64,
}

impl InitialStateConfig {
    pub fn isotropic(theta_over_pi: f64, phi_over_pi: f64) -> Self {
        Self { family: StateFamily::Isotropic, theta_over_pi, phi_over_pi }
    }

    pub fn neel(theta_over_pi: f64, phi_over_pi: f64) -> Self {
        Self { family: StateFamily::Neel, theta_over_pi, phi_over_pi }
    }

    pub fn direction(&self) -> BlochDirection {
        BlochDirection::from_fractions(self.theta_over_pi, self.phi_over_pi)
    }

    fn state_spec(&self, with_ancilla: bool) -> InitialStateSpec {
        InitialStateSpec { family: self.family, direction: self.direction(), with_ancilla_ghz: with_ancilla }
    }

    pub fn tag(&self) -> String {
        let fam = match self.family {
            StateFamily::Isotropic => "iso",
            StateFamily::Neel => "neel",
        };
        format!("{fam}_t{:.4}_p{:.4}", self.theta_over_pi, self.phi_over_pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGridSpec {
    pub dense_dt: f64,
    pub dense_until: f64,
    pub coarse_dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    /// isotropic grid: outer product of these two angle lists
    pub theta_over_pi: Vec<f64>,
    pub phi_over_pi: Vec<f64>,
    /// Neel-family thetas (phi = 0), reaching energy densities the isotropic
    /// family cannot
    pub neel_theta_over_pi: Vec<f64>,
    pub dos_bins: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let ticks = |hi: usize| -> Vec<f64> { (0..=hi).map(|k| 0.05 * k as f64).collect() };
        Self {
            theta_over_pi: ticks(10),
            phi_over_pi: ticks(10),
            neel_theta_over_pi: Vec::new(),
            dos_bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalizationSpec {
    /// 1-based system qubit indices of the probed subsystem
    pub subset: Vec<usize>,
}

impl Default for ThermalizationSpec {
    fn default() -> Self {
        Self { subset: vec![5, 6, 7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CuspSpec {
    pub n_values: Vec<usize>,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for CuspSpec {
    fn default() -> Self {
        Self { n_values: vec![8, 10, 12, 14], t_end: 40.0, dt: 0.1 }
    }
}

/// User-facing configuration; unset fields fall back to downscaled or
/// full-scale defaults at resolution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub model: Model,
    pub n: Option<usize>,
    pub seed: u64,
    /// 0 = one worker per core
    pub workers: usize,
    pub log_base: LogBase,
    pub full_scale: bool,
    pub ising: IsingModel,
    pub sqa: SqaModel,
    pub time: Option<TimeGridSpec>,
    pub window: Option<TimeAverageWindow>,
    pub initial_states: Vec<InitialStateConfig>,
    pub sweep: SweepSpec,
    pub thermalization: ThermalizationSpec,
    pub cusp: CuspSpec,
    pub krylov_dimension: usize,
    pub krylov_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsingModel {
    pub j: f64,
    pub g: f64,
    pub h: f64,
}

impl Default for IsingModel {
    fn default() -> Self {
        Self { j: 1.0, g: 1.05, h: -0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqaModel {
    pub lambda: f64,
    pub omega: f64,
}

impl Default for SqaModel {
    fn default() -> Self {
        Self { lambda: 1.0, omega: 1.0 }
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            model: Model::Ising,
            n: None,
            seed: 1,
            workers: 0,
            log_base: LogBase::Two,
            full_scale: false,
            ising: IsingModel::default(),
            sqa: SqaModel::default(),
            time: None,
            window: None,
            initial_states: Vec::new(),
            sweep: SweepSpec::default(),
            thermalization: ThermalizationSpec::default(),
            cusp: CuspSpec::default(),
            krylov_dimension: 30,
            krylov_tolerance: 1e-10,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Fill unset fields from the downscaled or full-scale defaults and
    /// validate the result.
    pub fn resolve(&self) -> Result<ResolvedSpec> {
        let n = self.n.unwrap_or(if self.full_scale { 14 } else { 10 });
        let time = self.time.unwrap_or(if self.full_scale {
            TimeGridSpec { dense_dt: 0.1, dense_until: 100.0, coarse_dt: 0.5, t_end: 1000.0 }
        } else {
            TimeGridSpec { dense_dt: 0.1, dense_until: 50.0, coarse_dt: 0.5, t_end: 200.0 }
        });
        let window = match self.window {
            Some(w) => w,
            None if self.full_scale => TimeAverageWindow { t_start: 100.0, t_end: 1000.0 },
            None => TimeAverageWindow { t_start: 50.0, t_end: 200.0 },
        };
        let initial_states = if self.initial_states.is_empty() {
            match self.model {
                Model::Ising => vec![
                    InitialStateConfig::isotropic(0.0, 0.0),
                    InitialStateConfig::isotropic(0.5, 0.5),
                    InitialStateConfig::isotropic(0.5, 0.0),
                ],
                Model::Sqa => vec![
                    InitialStateConfig::isotropic(0.5, 1.369),
                    InitialStateConfig::isotropic(0.5, 0.369),
                ],
            }
        } else {
            self.initial_states.clone()
        };
        let resolved = ResolvedSpec {
            model: self.model,
            n,
            seed: self.seed,
            workers: self.workers,
            log_base: self.log_base,
            ising: IsingParams { j: self.ising.j, g: self.ising.g, h: self.ising.h, n },
            sqa: SqaParams { lambda: self.sqa.lambda, omega: self.sqa.omega, n },
            time,
            window,
            initial_states,
            sweep: self.sweep.clone(),
            thermalization: self.thermalization.clone(),
            cusp: self.cusp.clone(),
            propagator: PropagatorConfig {
                krylov_dimension: self.krylov_dimension,
                tolerance: self.krylov_tolerance,
                ..PropagatorConfig::default()
            },
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

/// Fully concrete experiment description; what runs actually consume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSpec {
    pub model: Model,
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
    pub log_base: LogBase,
    pub ising: IsingParams,
    pub sqa: SqaParams,
    pub time: TimeGridSpec,
    pub window: TimeAverageWindow,
    pub initial_states: Vec<InitialStateConfig>,
    pub sweep: SweepSpec,
    pub thermalization: ThermalizationSpec,
    pub cusp: CuspSpec,
    #[serde(skip)]
    pub propagator: PropagatorConfig,
}

impl ResolvedSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("need at least two qubits"));
        }
        let needs_even = self.initial_states.iter().any(|s| s.family == StateFamily::Neel)
            || !self.sweep.neel_theta_over_pi.is_empty();
        if (needs_even || self.n >= 4) && self.n % 2 != 0 {
            return Err(Error::invalid(
                "protocol partition and Neel states need an even chain length",
            ));
        }
        for s in &self.initial_states {
            if !(0.0..=1.0).contains(&s.theta_over_pi) {
                return Err(Error::invalid(format!(
                    "theta/pi {} outside [0, 1]",
                    s.theta_over_pi
                )));
            }
            if !(0.0..2.0).contains(&s.phi_over_pi) {
                return Err(Error::invalid(format!("phi/pi {} outside [0, 2)", s.phi_over_pi)));
            }
        }
        if self.window.t_end > self.time.t_end + 1e-9 {
            return Err(Error::invalid("averaging window extends past the grid end"));
        }
        Ok(())
    }

    /// System Hamiltonian of the configured model.
    pub fn hamiltonian(&self) -> Result<HermitianOperator> {
        let layout = RegisterLayout::system(self.n)?;
        match self.model {
            Model::Ising => build_ising(&self.ising, layout),
            Model::Sqa => build_sqa(&self.sqa, layout),
        }
    }

    pub fn model_summary(&self) -> String {
        match self.model {
            Model::Ising => format!(
                "ising (J={}, g={}, h={}), n={}",
                self.ising.j, self.ising.g, self.ising.h, self.n
            ),
            Model::Sqa => format!(
                "sqa (lambda={}, omega={}), n={}",
                self.sqa.lambda, self.sqa.omega, self.n
            ),
        }
    }

    /// Deterministic fingerprint of everything that influences the data.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_string(self).expect("spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(b"experiment-spec-v1");
        hasher.update(canon.as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn dynamics_grid(&self) -> Result<TimeGrid> {
        TimeGrid::two_phase(
            self.time.dense_until,
            self.time.dense_dt,
            self.time.t_end,
            self.time.coarse_dt,
        )
    }

    /// Sweep trajectories only need the averaging window observed.
    fn sweep_grid(&self) -> Result<TimeGrid> {
        TimeGrid::window_only(self.window.t_start, self.window.t_end, self.time.coarse_dt)
    }

    /// Spectrum cache directory: environment override, else the default.
    pub fn cache_dir() -> PathBuf {
        std::env::var_os(CACHE_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    }
}

/// Map indexed work items, in parallel when the pool is available; results
/// keep their index order so outputs stay byte-identical for any worker count.
pub fn indexed_map<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if workers > 0 {
            builder = builder.num_threads(workers);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        return pool.install(|| (0..count).into_par_iter().map(&f).collect());
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..count).map(f).collect()
    }
}

fn fmt_sig12(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.11e}")
    }
}

/// Write a CSV with `#`-prefixed provenance comments, a column row, then data.
fn write_csv(
    path: &Path,
    comments: &[String],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{}", columns.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Files, checksums, and timings of one completed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultManifest {
    pub spec_fingerprint: String,
    pub software_version: String,
    pub files: Vec<ManifestEntry>,
    pub timings_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

impl ResultManifest {
    /// Check every listed file against its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<Vec<(String, bool)>> {
        let mut out = Vec::new();
        for entry in &self.files {
            let path = dir.join(&entry.name);
            let ok = path.exists() && sha256_file(&path)? == entry.sha256;
            out.push((entry.name.clone(), ok));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("manifest parse: {e}")))
    }
}

/// Write `manifest.json` for a completed (or failed-partial) run.
pub fn emit_manifest(
    spec: &ResolvedSpec,
    out_dir: &Path,
    files: &[PathBuf],
    timings: &BTreeMap<String, f64>,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    for f in files {
        let name = f
            .strip_prefix(out_dir)
            .unwrap_or(f)
            .to_string_lossy()
            .into_owned();
        entries.push(ManifestEntry {
            name,
            sha256: sha256_file(f)?,
            bytes: std::fs::metadata(f)?.len(),
        });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest = ResultManifest {
        spec_fingerprint: spec.fingerprint(),
        software_version: version().to_string(),
        files: entries,
        timings_seconds: timings.clone(),
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::invalid(format!("manifest serialize: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Remove partial outputs after a failed run.
fn cleanup(files: &[PathBuf]) {
    for f in files {
        let _ = std::fs::remove_file(f);
    }
}

/// Build the protocol branch pair for an initial state.
fn protocol_branches(cfg: &InitialStateConfig, n: usize) -> Result<BranchPair> {
    BranchPair::initial(&cfg.state_spec(true), RegisterLayout::system(n)?)
}

/// TMI observer over the protocol partition.
fn tmi_observer<'a>(
    part: &'a SubsystemPartition,
    base: LogBase,
) -> impl Observer + 'a {
    FnObserver::new(TMI_SERIES, move |_t, s: ProtocolState<'_>| {
        tripartite_mutual_information_base(s, part, base)
    })
}

/// Completed run: produced files plus phase timings.
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub timings: BTreeMap<String, f64>,
}

/// TMI dynamics for every configured initial state: one CSV per state with
/// columns `time, i3`.
pub fn run_tmi_dynamics(spec: &ResolvedSpec, out_dir: &Path) -> Result<RunOutput> {
    let started = Instant::now();
    let h = spec.hamiltonian()?;
    let layout = RegisterLayout::with_ancilla(spec.n)?;
    let part = SubsystemPartition::protocol(layout)?;
    let grid = spec.dynamics_grid()?;
    let mut files = Vec::new();
    let result = (|| -> Result<Vec<PathBuf>> {
        let rows = indexed_map(spec.initial_states.len(), spec.workers, |idx| {
            let state_cfg = &spec.initial_states[idx];
            let branches = protocol_branches(state_cfg, spec.n)?;
            let mut observers: Vec<Box<dyn Observer + '_>> =
                vec![Box::new(tmi_observer(&part, spec.log_base))];
            let traj = evolve_trajectory(
                &h,
                EvolvingState::Branches(branches),
                &grid,
                &mut observers,
                &spec.propagator,
            )?;
            Ok((state_cfg.tag(), traj))
        })?;
        let mut produced = Vec::new();
        for (tag, traj) in rows {
            let path = out_dir.join(format!("tmi_{tag}.csv"));
            let i3 = traj.series(TMI_SERIES).expect("tmi series present");
            let data: Vec<Vec<String>> = traj
                .times
                .iter()
                .zip(i3.iter())
                .map(|(&t, &v)| vec![fmt_sig12(t), fmt_sig12(v)])
                .collect();
            write_csv(
                &path,
                &[
                    format!("tripartite mutual information dynamics"),
                    format!("model: {}", spec.model_summary()),
                    format!("state: {tag} (protocol register, ancilla GHZ on Q1)"),
                    format!("units: time in 1/J; i3 in log base {}", spec.log_base.label()),
                ],
                &["time", "i3"],
                &data,
            )?;
            produced.push(path);
        }
        Ok(produced)
    })();
    match result {
        Ok(produced) => files.extend(produced),
        Err(e) => {
            cleanup(&files);
            return Err(e);
        }
    }
    let mut timings = BTreeMap::new();
    timings.insert("tmi_dynamics".into(), started.elapsed().as_secs_f64());
    let manifest = emit_manifest(spec, out_dir, &files, &timings)?;
    Ok(RunOutput { files, manifest, timings })
}

/// One row of the epsilon sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub state: InitialStateConfig,
    pub epsilon: f64,
    pub beta: Option<f64>,
    pub beta_note: String,
    pub i3_avg: f64,
}

/// All sweep points: the isotropic grid plus the Neel theta list.
pub fn sweep_points(spec: &ResolvedSpec) -> Vec<InitialStateConfig> {
    let mut points = Vec::new();
    for &t in &spec.sweep.theta_over_pi {
        for &p in &spec.sweep.phi_over_pi {
            points.push(InitialStateConfig::isotropic(t, p));
        }
    }
    for &t in &spec.sweep.neel_theta_over_pi {
        points.push(InitialStateConfig::neel(t, 0.0));
    }
    points
}

/// Evaluate one sweep point against a precomputed spectrum.
pub fn sweep_row(
    spec: &ResolvedSpec,
    h: &HermitianOperator,
    spectrum: &Spectrum,
    part: &SubsystemPartition,
    state_cfg: &InitialStateConfig,
) -> Result<SweepRow> {
    // energy density and beta key on the bare product state
    let product = scrambling_initial_state(
        &state_cfg.state_spec(false),
        RegisterLayout::system(spec.n)?,
    )?;
    let epsilon = energy_density(&product, h, spectrum.extremes())?;
    let (beta, beta_note) =
        match inverse_temperature_for_energy(product.energy(h)?, spectrum) {
            Ok(b) => (Some(b), String::new()),
            Err(Error::NoFiniteBeta { edge, .. }) => (None, format!("no-finite-beta:{edge}")),
            Err(e) => return Err(e),
        };
    let branches = protocol_branches(state_cfg, spec.n)?;
    let grid = spec.sweep_grid()?;
    let mut observers: Vec<Box<dyn Observer + '_>> =
        vec![Box::new(tmi_observer(part, spec.log_base))];
    let traj = evolve_trajectory(
        h,
        EvolvingState::Branches(branches),
        &grid,
        &mut observers,
        &spec.propagator,
    )?;
    let i3_avg = time_averaged_tmi(&traj, spec.window)?;
    Ok(SweepRow { state: *state_cfg, epsilon, beta, beta_note, i3_avg })
}

/// Time-averaged TMI versus energy density over the configured grid, plus the
/// density of states of the same Hamiltonian.
pub fn run_epsilon_sweep(spec: &ResolvedSpec, out_dir: &Path) -> Result<RunOutput> {
    let mut timings = BTreeMap::new();
    let h = spec.hamiltonian()?;
    let t0 = Instant::now();
    let spectrum = cached_full_spectrum(&h, false, Some(&ResolvedSpec::cache_dir()))?;
    timings.insert("spectrum".into(), t0.elapsed().as_secs_f64());

    let layout = RegisterLayout::with_ancilla(spec.n)?;
    let part = SubsystemPartition::protocol(layout)?;
    let points = sweep_points(spec);
    if points.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }

    let t1 = Instant::now();
    let rows = indexed_map(points.len(), spec.workers, |idx| {
        sweep_row(spec, &h, &spectrum, &part, &points[idx])
    })?;
    timings.insert("sweep".into(), t1.elapsed().as_secs_f64());

    let mut files = Vec::new();
    let result = (|| -> Result<Vec<PathBuf>> {
        let sweep_path = out_dir.join(format!("sweep_{}_n{}.csv", spec.model.label(), spec.n));
        let data: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    match r.state.family {
                        StateFamily::Isotropic => "isotropic".to_string(),
                        StateFamily::Neel => "neel".to_string(),
                    },
                    fmt_sig12(r.state.theta_over_pi),
                    fmt_sig12(r.state.phi_over_pi),
                    fmt_sig12(r.epsilon),
                    r.beta.map(fmt_sig12).unwrap_or_else(|| "nan".into()),
                    fmt_sig12(r.i3_avg),
                    r.beta_note.clone(),
                ]
            })
            .collect();
        write_csv(
            &sweep_path,
            &[
                "time-averaged tripartite mutual information vs energy density".to_string(),
                format!("model: {}", spec.model_summary()),
                format!(
                    "window: [{}, {}], spacing {}",
                    spec.window.t_start, spec.window.t_end, spec.time.coarse_dt
                ),
                format!("angles in units of pi; i3 in log base {}", spec.log_base.label()),
            ],
            &["family", "theta_over_pi", "phi_over_pi", "epsilon", "beta", "i3_avg", "note"],
            &data,
        )?;
        let dos = density_of_states(&spectrum, spec.sweep.dos_bins)?;
        let dos_path = out_dir.join(format!("dos_{}_n{}.csv", spec.model.label(), spec.n));
        let centers = dos.bin_centers();
        let dos_rows: Vec<Vec<String>> = centers
            .iter()
            .zip(dos.counts.iter())
            .map(|(&c, &k)| vec![fmt_sig12(c), k.to_string()])
            .collect();
        write_csv(
            &dos_path,
            &[
                "density of states vs energy density".to_string(),
                format!("model: {}", spec.model_summary()),
                format!("bins: {}, total count {}", spec.sweep.dos_bins, dos.dimension),
            ],
            &["epsilon_bin_center", "count"],
            &dos_rows,
        )?;
        Ok(vec![sweep_path, dos_path])
    })();
    match result {
        Ok(produced) => files.extend(produced),
        Err(e) => {
            cleanup(&files);
            return Err(e);
        }
    }
    let manifest = emit_manifest(spec, out_dir, &files, &timings)?;
    Ok(RunOutput { files, manifest, timings })
}

/// Local-observable deviations and thermal distance for each initial state;
/// quenches run on the bare product states, thermal references at the
/// energy-matched temperature.
pub fn run_thermalization_diagnostics(spec: &ResolvedSpec, out_dir: &Path) -> Result<RunOutput> {
    let mut timings = BTreeMap::new();
    let h = spec.hamiltonian()?;
    let subset_bits: Vec<usize> = {
        let layout = RegisterLayout::system(spec.n)?;
        spec.thermalization
            .subset
            .iter()
            .map(|&q| layout.system_bit(q))
            .collect::<Result<_>>()?
    };
    let t0 = Instant::now();
    let spectrum = full_spectrum(&h, true)?;
    timings.insert("spectrum_with_vectors".into(), t0.elapsed().as_secs_f64());

    let grid = spec.dynamics_grid()?;
    let t1 = Instant::now();
    let outputs = indexed_map(spec.initial_states.len(), spec.workers, |idx| {
        let state_cfg = &spec.initial_states[idx];
        let psi0 = scrambling_initial_state(
            &state_cfg.state_spec(false),
            RegisterLayout::system(spec.n)?,
        )?;
        let beta = inverse_temperature_for_energy(psi0.energy(&h)?, &spectrum)?;
        let rho_th = thermal_rdm(&spectrum, beta, &subset_bits)?;
        let bits = subset_bits.clone();
        let mut observers: Vec<Box<dyn Observer + '_>> = Vec::new();
        for (name, axis) in [("dev_x", Axis::X), ("dev_y", Axis::Y), ("dev_z", Axis::Z)] {
            let rho_ref = rho_th.clone();
            let bits = bits.clone();
            observers.push(Box::new(FnObserver::new(name, move |_t, s: ProtocolState<'_>| {
                let psi = match s {
                    ProtocolState::Full(p) => p,
                    ProtocolState::Branches(_) => {
                        return Err(Error::invalid("thermalization runs on bare states"))
                    }
                };
                let rho = partial_trace(psi, &bits)?;
                local_observable_deviation(&rho, &rho_ref, axis)
            })));
        }
        let rho_ref = rho_th.clone();
        let bits2 = bits.clone();
        observers.push(Box::new(FnObserver::new("distance", move |_t, s: ProtocolState<'_>| {
            let psi = match s {
                ProtocolState::Full(p) => p,
                ProtocolState::Branches(_) => {
                    return Err(Error::invalid("thermalization runs on bare states"))
                }
            };
            let rho = partial_trace(psi, &bits2)?;
            rdm_distance(&rho, &rho_ref)
        })));
        let traj = evolve_trajectory(
            &h,
            EvolvingState::Full(psi0),
            &grid,
            &mut observers,
            &spec.propagator,
        )?;
        Ok((state_cfg.tag(), beta, traj))
    })?;
    timings.insert("trajectories".into(), t1.elapsed().as_secs_f64());

    let mut files = Vec::new();
    let result = (|| -> Result<Vec<PathBuf>> {
        let mut produced = Vec::new();
        for (tag, beta, traj) in &outputs {
            let path = out_dir.join(format!("therm_{tag}.csv"));
            let columns = ["time", "dev_x", "dev_y", "dev_z", "distance"];
            let series: Vec<&[f64]> = columns[1..]
                .iter()
                .map(|name| traj.series(name).expect("series recorded"))
                .collect();
            let data: Vec<Vec<String>> = traj
                .times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let mut row = vec![fmt_sig12(t)];
                    row.extend(series.iter().map(|s| fmt_sig12(s[k])));
                    row
                })
                .collect();
            write_csv(
                &path,
                &[
                    "local-observable deviations and thermal distance".to_string(),
                    format!("model: {}", spec.model_summary()),
                    format!("state: {tag} (bare product state quench)"),
                    format!(
                        "subset: qubits {:?}; thermal reference at energy-matched beta = {}",
                        spec.thermalization.subset,
                        fmt_sig12(*beta)
                    ),
                ],
                &columns,
                &data,
            )?;
            produced.push(path);
        }
        Ok(produced)
    })();
    match result {
        Ok(produced) => files.extend(produced),
        Err(e) => {
            cleanup(&files);
            return Err(e);
        }
    }
    let manifest = emit_manifest(spec, out_dir, &files, &timings)?;
    Ok(RunOutput { files, manifest, timings })
}

/// Least-squares line fit returning `(slope, intercept, r_squared)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two points to fit"));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::invalid("degenerate abscissae"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((slope, intercept, r2))
}

/// Report of the cusp finite-size study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuspReport {
    pub rows: Vec<(usize, Option<f64>)>,
    pub fit: Option<CuspFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuspFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `<sx(t)>` for the x-polarized quench at one chain length.
pub fn sigma_x_trajectory(
    ising: IsingModel,
    n: usize,
    t_end: f64,
    dt: f64,
    prop: &PropagatorConfig,
) -> Result<crate::observables::QuenchTrajectory> {
    let layout = RegisterLayout::system(n)?;
    let h = build_ising(&IsingParams { j: ising.j, g: ising.g, h: ising.h, n }, layout)?;
    let sx_avg = average_pauli(layout, Axis::X)?;
    let psi0 = scrambling_initial_state(
        &InitialStateSpec::isotropic(BlochDirection::x_plus(), false),
        layout,
    )?;
    let grid = TimeGrid::uniform(t_end, dt)?;
    let mut observers: Vec<Box<dyn Observer + '_>> =
        vec![Box::new(FnObserver::new("sx", |_t, s: ProtocolState<'_>| match s {
            ProtocolState::Full(p) => Ok(sx_avg.expectation(p.amplitudes())?.re),
            ProtocolState::Branches(_) => Err(Error::invalid("bare state expected")),
        }))];
    evolve_trajectory(&h, EvolvingState::Full(psi0), &grid, &mut observers, prop)
}

/// Finite-size study of the first cusp time over a list of chain lengths.
pub fn run_cusp_study(spec: &ResolvedSpec, out_dir: &Path) -> Result<RunOutput> {
    let mut timings = BTreeMap::new();
    let t0 = Instant::now();
    let ising = IsingModel { j: spec.ising.j, g: spec.ising.g, h: spec.ising.h };
    let trajs = indexed_map(spec.cusp.n_values.len(), spec.workers, |idx| {
        let n = spec.cusp.n_values[idx];
        let traj = sigma_x_trajectory(ising, n, spec.cusp.t_end, spec.cusp.dt, &spec.propagator)?;
        Ok((n, traj))
    })?;
    timings.insert("trajectories".into(), t0.elapsed().as_secs_f64());

    let cusp_cfg = CuspConfig::default();
    let mut rows: Vec<(usize, Option<f64>)> = Vec::new();
    for (n, traj) in &trajs {
        let sx = traj.series("sx").expect("sx series");
        rows.push((*n, detect_first_cusp(&traj.times, sx, &cusp_cfg)));
    }
    let fit_points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|(n, t)| t.map(|t| (*n as f64, t)))
        .collect();
    let fit = if fit_points.len() >= 2 {
        let (slope, intercept, r_squared) = linear_fit(&fit_points)?;
        Some(CuspFit { slope, intercept, r_squared })
    } else {
        None
    };

    let mut files = Vec::new();
    let result = (|| -> Result<Vec<PathBuf>> {
        let mut produced = Vec::new();
        for (n, traj) in &trajs {
            let path = out_dir.join(format!("sigmax_n{n}.csv"));
            let sx = traj.series("sx").expect("sx series");
            let data: Vec<Vec<String>> = traj
                .times
                .iter()
                .zip(sx.iter())
                .map(|(&t, &v)| vec![fmt_sig12(t), fmt_sig12(v)])
                .collect();
            write_csv(
                &path,
                &[
                    "register-averaged <sigma^x>(t) for the x-polarized quench".to_string(),
                    format!("model: ising (J={}, g={}, h={}), n={}", ising.j, ising.g, ising.h, n),
                ],
                &["time", "sx"],
                &data,
            )?;
            produced.push(path);
        }
        let summary = out_dir.join("cusp_summary.csv");
        let data: Vec<Vec<String>> = rows
            .iter()
            .map(|(n, t)| {
                vec![
                    n.to_string(),
                    t.map(fmt_sig12).unwrap_or_else(|| "absent".into()),
                ]
            })
            .collect();
        write_csv(
            &summary,
            &["first-cusp time vs chain length".to_string()],
            &["n", "t_cusp"],
            &data,
        )?;
        produced.push(summary);
        let report = CuspReport { rows: rows.clone(), fit: fit.clone() };
        let report_path = out_dir.join("cusp_fit.json");
        std::fs::write(
            &report_path,
            serde_json::to_string_pretty(&report)
                .map_err(|e| Error::invalid(format!("report serialize: {e}")))?,
        )?;
        produced.push(report_path);
        Ok(produced)
    })();
    match result {
        Ok(produced) => files.extend(produced),
        Err(e) => {
            cleanup(&files);
            return Err(e);
        }
    }
    let manifest = emit_manifest(spec, out_dir, &files, &timings)?;
    Ok(RunOutput { files, manifest, timings })
}

/// Compute (or load) the spectrum and write eigenvalues plus the DoS.
pub fn run_spectrum(spec: &ResolvedSpec, out_dir: &Path) -> Result<RunOutput> {
    let mut timings = BTreeMap::new();
    let h = spec.hamiltonian()?;
    let t0 = Instant::now();
    let spectrum = cached_full_spectrum(&h, false, Some(&ResolvedSpec::cache_dir()))?;
    timings.insert("spectrum".into(), t0.elapsed().as_secs_f64());
    let mut files = Vec::new();
    let result = (|| -> Result<Vec<PathBuf>> {
        let path = out_dir.join(format!("spectrum_{}_n{}.csv", spec.model.label(), spec.n));
        let data: Vec<Vec<String>> = spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &e)| vec![k.to_string(), fmt_sig12(e)])
            .collect();
        write_csv(
            &path,
            &[
                "full eigenvalue list, ascending".to_string(),
                format!("model: {}", spec.model_summary()),
                format!("E_min = {}, E_max = {}", fmt_sig12(spectrum.e_min()), fmt_sig12(spectrum.e_max())),
            ],
            &["index", "eigenvalue"],
            &data,
        )?;
        let dos = density_of_states(&spectrum, spec.sweep.dos_bins)?;
        let dos_path = out_dir.join(format!("dos_{}_n{}.csv", spec.model.label(), spec.n));
        let centers = dos.bin_centers();
        let dos_rows: Vec<Vec<String>> = centers
            .iter()
            .zip(dos.counts.iter())
            .map(|(&c, &k)| vec![fmt_sig12(c), k.to_string()])
            .collect();
        write_csv(
            &dos_path,
            &[
                "density of states vs energy density".to_string(),
                format!("model: {}", spec.model_summary()),
            ],
            &["epsilon_bin_center", "count"],
            &dos_rows,
        )?;
        Ok(vec![path, dos_path])
    })();
    match result {
        Ok(produced) => files.extend(produced),
        Err(e) => {
            cleanup(&files);
            return Err(e);
        }
    }
    let manifest = emit_manifest(spec, out_dir, &files, &timings)?;
    Ok(RunOutput { files, manifest, timings })
}

/// One check of the quick oracle suite.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

/// Small-n oracle suite behind the `validate` subcommand: fast independent
/// cross-checks of the numerical core.
pub fn validate_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    use crate::evolve::{krylov_evolve, spectral_evolve};
    use crate::observables::{tripartite_mutual_information, von_neumann_entropy};

    let mut out = Vec::new();

    // Hermiticity of both builders
    {
        let layout = RegisterLayout::system(6)?;
        let ising = build_ising(&IsingParams::standard(6), layout)?;
        let sqa = build_sqa(&SqaParams::standard(6), layout)?;
        let defect = ising.hermiticity_defect().max(sqa.hermiticity_defect());
        out.push(check("hermiticity", defect <= 1e-12, format!("max defect {defect:.2e}")));
    }

    // Krylov vs spectral propagation
    {
        let n = 8;
        let layout = RegisterLayout::system(n)?;
        let h = build_ising(&IsingParams::standard(n), layout)?;
        let s = full_spectrum(&h, true)?;
        let d = BlochDirection::from_fractions(0.37, 0.21 + (seed % 7) as f64 * 0.07);
        let psi = scrambling_initial_state(&InitialStateSpec::isotropic(d, false), layout)?;
        let a = krylov_evolve(&h, &psi, 10.0, &PropagatorConfig::default())?;
        let b = spectral_evolve(&s, &psi, 10.0)?;
        let overlap = a.inner(&b).norm();
        out.push(check(
            "krylov-vs-spectral",
            overlap >= 1.0 - 1e-8,
            format!("overlap deficit {:.2e}", 1.0 - overlap),
        ));
    }

    // branch decomposition equals full-register evolution
    {
        let n = 6;
        let system = RegisterLayout::system(n)?;
        let with_anc = RegisterLayout::with_ancilla(n)?;
        let h_sys = build_ising(&IsingParams::standard(n), system)?;
        let h_full = build_ising(&IsingParams::standard(n), with_anc)?;
        let d = BlochDirection::from_fractions(0.45, 1.2);
        let spec_state = InitialStateSpec::isotropic(d, true);
        let part = SubsystemPartition::protocol(with_anc)?;
        let mut branches = BranchPair::initial(&spec_state, system)?;
        let full0 = scrambling_initial_state(&spec_state, with_anc)?;
        let cfg = PropagatorConfig::default();
        let t = 5.0;
        branches.plus = krylov_evolve(&h_sys, &branches.plus, t, &cfg)?;
        branches.minus = krylov_evolve(&h_sys, &branches.minus, t, &cfg)?;
        let full_t = krylov_evolve(&h_full, &full0, t, &cfg)?;
        let i3_branch =
            tripartite_mutual_information(crate::state::ProtocolState::Branches(&branches), &part)?;
        let i3_full =
            tripartite_mutual_information(crate::state::ProtocolState::Full(&full_t), &part)?;
        let diff = (i3_branch - i3_full).abs();
        out.push(check("branch-equivalence", diff <= 1e-8, format!("TMI difference {diff:.2e}")));
    }

    // initial protocol state has zero TMI
    {
        let n = 6;
        let with_anc = RegisterLayout::with_ancilla(n)?;
        let d = BlochDirection::from_fractions(0.29, 0.77);
        let psi = scrambling_initial_state(&InitialStateSpec::isotropic(d, true), with_anc)?;
        let part = SubsystemPartition::protocol(with_anc)?;
        let i3 = tripartite_mutual_information(crate::state::ProtocolState::Full(&psi), &part)?;
        out.push(check("initial-tmi-zero", i3.abs() <= 1e-10, format!("I3(0) = {i3:.2e}")));
    }

    // thermal round trip
    {
        let n = 6;
        let layout = RegisterLayout::system(n)?;
        let h = build_ising(&IsingParams::standard(n), layout)?;
        let s = full_spectrum(&h, false)?;
        let beta = 0.8;
        let e = crate::state::thermal_energy(s.eigenvalues(), beta);
        let back = inverse_temperature_for_energy(e, &s)?;
        let diff = (back - beta).abs();
        out.push(check("beta-round-trip", diff <= 1e-8, format!("beta error {diff:.2e}")));
    }

    // pure-state entropy is zero, GHZ marginal is one bit
    {
        let n = 4;
        let with_anc = RegisterLayout::with_ancilla(n)?;
        let d = BlochDirection::from_fractions(0.33, 0.9);
        let psi = scrambling_initial_state(&InitialStateSpec::isotropic(d, true), with_anc)?;
        let all_bits: Vec<usize> = (0..with_anc.total_qubits()).collect();
        let s_all = von_neumann_entropy(&partial_trace(&psi, &all_bits)?)?;
        let s_anc = von_neumann_entropy(&partial_trace(&psi, &[with_anc.ancilla_bit().unwrap()])?)?;
        let ok = s_all.abs() <= 1e-10 && (s_anc - 1.0).abs() <= 1e-10;
        out.push(check("entropy-basics", ok, format!("S(all) = {s_all:.2e}, S(A) = {s_anc:.6}")));
    }

    Ok(out)
}
