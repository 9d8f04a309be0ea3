//! `pfv`: solve coupled electron-mode systems and report the identity
//! checks as reproducible JSON/CSV artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};

use pfv_core::breakdown::{energy_breakdown, EnergyBreakdown};
use pfv_core::error::PfvError;
use pfv_core::model::Model;
use pfv_core::qedft::{
    aux_mode_forces, density_from_state, invert_potential_single_electron, ks_round_trip,
};
use pfv_core::scf::{assemble_product_state, scf_meanfield, ScfConfig};
use pfv_core::solver::{solve_ground, EigenSolveConfig, QuantumState};
use pfv_core::spec::{FieldTreatment, FreeSpaceModeSetSpec, SystemSpec};
use pfv_core::stateio::save_state;
use pfv_core::virial::{mass_renorm, virial_report, Tolerances, VirialReport};

const USAGE: &str = "\
usage: pfv <command> --config PATH [--out DIR] [--tol NAME=VALUE]... [--seed N] [--threads N]

commands:
  solve          ground state -> state.pfvw + breakdown.json
  virial-report  identity checks -> virial_report.json + virial_report.csv
  scf            mean-field iteration -> scf.json
  ks-invert      density inversion round trip -> ks_invert.json + ks_report.json
  mass-renorm    free-space mode sum -> mass_renorm.json

flags:
  --config PATH   system JSON (mode-set JSON for mass-renorm); required
  --out DIR       output directory, created if missing (default: .)
  --tol NAME=VALUE  override one tolerance; repeatable
  --seed N        eigensolver seed (default 7)
  --threads N     BLAS threads; falls back to PFV_THREADS, then 1

exit status: 0 all requested checks pass; 1 usage/config error; 2 check failure.
A run manifest (manifest.json) listing every artifact hash is written last.";

/// serde_json formatter printing every float at 17 significant digits, so
/// artifacts are value-exact and byte-stable across runs.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn to_json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value.serialize(&mut ser).context("serializing report")?;
    buf.push(b'\n');
    Ok(buf)
}

fn f64_cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(f64_cell).unwrap_or_default()
}

#[derive(Serialize)]
struct TolOverride {
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct ArtifactEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: &'a str,
    out_dir: &'a str,
    tol_overrides: &'a [TolOverride],
    seed: u64,
    threads: usize,
    timestamp_unix: u64,
    artifacts: &'a [ArtifactEntry],
}

struct Cli {
    command: String,
    config_path: String,
    out_dir: PathBuf,
    tols: Tolerances,
    overrides: Vec<TolOverride>,
    seed: u64,
    threads: usize,
    artifacts: Vec<ArtifactEntry>,
}

impl Cli {
    fn parse() -> anyhow::Result<Option<Cli>> {
        let mut args = std::env::args().skip(1);
        let command = match args.next() {
            Some(c) if c == "--help" || c == "-h" => {
                println!("{USAGE}");
                return Ok(None);
            }
            Some(c) => c,
            None => bail!("missing command\n{USAGE}"),
        };
        if !["solve", "virial-report", "scf", "ks-invert", "mass-renorm"]
            .contains(&command.as_str())
        {
            bail!("unknown command `{command}`\n{USAGE}");
        }
        let mut config_path: Option<String> = None;
        let mut out_dir = PathBuf::from(".");
        let mut tols = Tolerances::default();
        let mut overrides = Vec::new();
        let mut seed = EigenSolveConfig::default().seed;
        let mut threads: Option<usize> = None;
        while let Some(flag) = args.next() {
            let mut value = |name: &str| {
                args.next().ok_or_else(|| anyhow!("flag {name} needs a value\n{USAGE}"))
            };
            match flag.as_str() {
                "--config" => config_path = Some(value("--config")?),
                "--out" => out_dir = PathBuf::from(value("--out")?),
                "--tol" => {
                    let spec = value("--tol")?;
                    let (name, raw) = spec
                        .split_once('=')
                        .ok_or_else(|| anyhow!("--tol expects NAME=VALUE, got `{spec}`"))?;
                    let parsed: f64 = raw
                        .parse()
                        .with_context(|| format!("--tol {name}: bad number `{raw}`"))?;
                    tols.set_by_name(name, parsed)?;
                    overrides.push(TolOverride { name: name.to_string(), value: parsed });
                }
                "--seed" => {
                    seed = value("--seed")?.parse().context("--seed expects an integer")?
                }
                "--threads" => {
                    threads =
                        Some(value("--threads")?.parse().context("--threads expects an integer")?)
                }
                "--help" | "-h" => {
                    println!("{USAGE}");
                    return Ok(None);
                }
                other => bail!("unknown flag `{other}`\n{USAGE}"),
            }
        }
        let config_path = config_path.ok_or_else(|| anyhow!("--config is required\n{USAGE}"))?;
        let threads = match threads {
            Some(n) => n,
            None => match std::env::var("PFV_THREADS") {
                Ok(v) => v.parse().context("PFV_THREADS expects an integer")?,
                Err(_) => 1,
            },
        };
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        Ok(Some(Cli {
            command,
            config_path,
            out_dir,
            tols,
            overrides,
            seed,
            threads,
            artifacts: Vec::new(),
        }))
    }

    fn read_config(&self) -> anyhow::Result<String> {
        std::fs::read_to_string(&self.config_path)
            .with_context(|| format!("reading config {}", self.config_path))
    }

    fn record_artifact(&mut self, name: &str, bytes: &[u8]) {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        self.artifacts.push(ArtifactEntry { file: name.to_string(), sha256: hex });
    }

    fn write_artifact(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record_artifact(name, bytes);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let bytes = to_json_bytes(value)?;
        self.write_artifact(name, &bytes)
    }

    /// The manifest is written last so it can list every artifact hash.
    fn write_manifest(&mut self) -> anyhow::Result<()> {
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = RunManifest {
            command: &self.command,
            config: &self.config_path,
            out_dir: &self.out_dir.display().to_string(),
            tol_overrides: &self.overrides,
            seed: self.seed,
            threads: self.threads,
            timestamp_unix,
            artifacts: &self.artifacts,
        };
        let bytes = to_json_bytes(&manifest)?;
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn eigen_config(&self) -> EigenSolveConfig {
        EigenSolveConfig { seed: self.seed, ..EigenSolveConfig::default() }
    }
}

fn load_system(cli: &Cli) -> anyhow::Result<(SystemSpec, Model)> {
    let text = cli.read_config()?;
    let spec = SystemSpec::from_json_str(&text)
        .with_context(|| format!("parsing config {}", cli.config_path))?;
    let model = Model::new(spec.clone())?;
    Ok((spec, model))
}

/// Ground state for reporting: eigensolve for quantum field treatment, the
/// mean-field product state for classical.
fn ground_state(cli: &Cli, model: &Model) -> anyhow::Result<QuantumState> {
    match model.spec().field_treatment {
        FieldTreatment::Quantum => Ok(solve_ground(model, &cli.eigen_config())?),
        FieldTreatment::Classical => {
            let mf = scf_meanfield(model, &ScfConfig::default(), &cli.eigen_config())?;
            if !mf.converged {
                bail!("mean-field iteration did not converge in {} cycles", mf.cycles);
            }
            Ok(assemble_product_state(model, &mf)?)
        }
    }
}

fn breakdown_for(
    cli: &Cli,
    model: &Model,
    state: &QuantumState,
) -> anyhow::Result<EnergyBreakdown> {
    Ok(energy_breakdown(model, state, cli.tols.eigres_gate)?)
}

fn cmd_solve(cli: &mut Cli) -> anyhow::Result<u8> {
    let (spec, model) = load_system(cli)?;
    let state = ground_state(cli, &model)?;
    let bd = breakdown_for(cli, &model, &state)?;

    let state_path = cli.out_dir.join("state.pfvw");
    save_state(&state_path, &spec, &state)?;
    let state_bytes = std::fs::read(&state_path)?;
    cli.record_artifact("state.pfvw", &state_bytes);
    cli.write_json("breakdown.json", &bd)?;

    eprintln!(
        "solve: energy {:.12e}, eigenresidual {:.3e}, dim {}",
        bd.total,
        bd.eigenresidual,
        model.dim()
    );
    if bd.noneigen_warning {
        match model.spec().field_treatment {
            FieldTreatment::Quantum => {
                eprintln!(
                    "solve: eigenresidual {:.3e} exceeds the gate {:.3e}",
                    bd.eigenresidual, cli.tols.eigres_gate
                );
                return Ok(2);
            }
            // A factorized state is not meant to be a full-Hamiltonian
            // eigenstate; the gap to one is informational here.
            FieldTreatment::Classical => eprintln!(
                "solve: factorized state sits {:.3e} from a full eigenstate",
                bd.eigenresidual
            ),
        }
    }
    Ok(0)
}

fn report_csv(report: &VirialReport) -> Vec<u8> {
    let mut out = String::from("identity,residual,scale,relative,oracle,paper_form_residual,pass\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.identity,
            f64_cell(row.residual),
            f64_cell(row.scale),
            f64_cell(row.relative),
            opt_cell(row.oracle),
            opt_cell(row.paper_form_residual),
            row.pass
        ));
    }
    out.into_bytes()
}

fn cmd_virial_report(cli: &mut Cli) -> anyhow::Result<u8> {
    let (_, model) = load_system(cli)?;
    let state = ground_state(cli, &model)?;
    let bd = breakdown_for(cli, &model, &state)?;
    let report = virial_report(&model, &state, &bd, &cli.tols)?;

    cli.write_json("virial_report.json", &report)?;
    cli.write_artifact("virial_report.csv", &report_csv(&report))?;

    for row in &report.rows {
        eprintln!(
            "virial-report: {:<17} residual {:+.3e}  relative {:.3e}  {}",
            row.identity,
            row.residual,
            row.relative,
            if row.pass { "pass" } else { "FAIL" }
        );
    }
    if report.noneigen_warning {
        eprintln!(
            "virial-report: warning: eigenresidual {:.3e} exceeds the gate",
            report.eigenresidual
        );
    }
    if report.all_pass {
        Ok(0)
    } else {
        eprintln!("virial-report: failing rows: {}", report.failing().join(", "));
        Ok(2)
    }
}

fn cmd_scf(cli: &mut Cli) -> anyhow::Result<u8> {
    let (_, model) = load_system(cli)?;
    let mf = scf_meanfield(&model, &ScfConfig::default(), &cli.eigen_config())?;
    cli.write_json("scf.json", &mf)?;
    eprintln!(
        "scf: total energy {:.12e} after {} cycles ({})",
        mf.total_energy,
        mf.cycles,
        if mf.converged { "converged" } else { "NOT converged" }
    );
    if !mf.converged {
        return Ok(2);
    }
    let worst = mf.force_residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst > cli.tols.force_balance.max(cli.tols.abs_floor) {
        eprintln!("scf: force residual {worst:.3e} exceeds the force_balance tolerance");
        return Ok(2);
    }
    Ok(0)
}

#[derive(Serialize)]
struct InversionArtifact<'a> {
    grid_min: &'a [f64],
    grid_max: &'a [f64],
    grid_points: Vec<u32>,
    v_s: &'a [f64],
    f_s: &'a [f64],
    mask: &'a [bool],
    interior_count: usize,
}

fn cmd_ks_invert(cli: &mut Cli) -> anyhow::Result<u8> {
    let (spec, model) = load_system(cli)?;
    let state = ground_state(cli, &model)?;
    let bd = breakdown_for(cli, &model, &state)?;

    let rho = density_from_state(&model, &state);
    let inv = invert_potential_single_electron(&model, &rho)?;
    let p_targets: Vec<f64> = bd.modes.iter().map(|m| m.p).collect();
    let f_s = aux_mode_forces(&p_targets, &spec.modes);
    cli.write_json(
        "ks_invert.json",
        &InversionArtifact {
            grid_min: &spec.grid.min,
            grid_max: &spec.grid.max,
            grid_points: spec.grid.points.clone(),
            v_s: &inv.v_s,
            f_s: &f_s,
            mask: &inv.mask,
            interior_count: inv.interior_count,
        },
    )?;

    match ks_round_trip(&model, &state, &bd, &cli.tols) {
        Ok(report) => {
            cli.write_json("ks_report.json", &report)?;
            eprintln!(
                "ks-invert: density L2 {:.3e}, displacement gap {:.3e}, identities {} / {}",
                report.density_l2,
                report.displacement_gap,
                if report.identity_i.pass { "pass" } else { "FAIL" },
                if report.identity_ii.pass { "pass" } else { "FAIL" }
            );
            if report.identity_i.pass && report.identity_ii.pass {
                Ok(0)
            } else {
                Ok(2)
            }
        }
        Err(PfvError::Qedft(msg)) => {
            eprintln!("ks-invert: round-trip gate failed: {msg}");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_mass_renorm(cli: &mut Cli) -> anyhow::Result<u8> {
    let text = cli.read_config()?;
    let spec = FreeSpaceModeSetSpec::from_json_str(&text)
        .with_context(|| format!("parsing config {}", cli.config_path))?;
    let result = mass_renorm(&spec)?;
    cli.write_json("mass_renorm.json", &result)?;
    eprintln!(
        "mass-renorm: mu_continuum {:.6e}, mu_discrete {:.6e} ({} modes, deviation {:+.3e})",
        result.mu_continuum, result.mu_discrete, result.mode_count, result.relative_deviation
    );
    Ok(0)
}

fn run(cli: &mut Cli) -> anyhow::Result<u8> {
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating output directory {}", cli.out_dir.display()))?;
    pfv_core::lapack::set_blas_threads(cli.threads);
    match cli.command.as_str() {
        "solve" => cmd_solve(cli),
        "virial-report" => cmd_virial_report(cli),
        "scf" => cmd_scf(cli),
        "ks-invert" => cmd_ks_invert(cli),
        "mass-renorm" => cmd_mass_renorm(cli),
        other => bail!("unknown command `{other}`"),
    }
}

fn main() -> ExitCode {
    let mut cli = match Cli::parse() {
        Ok(Some(cli)) => cli,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfv: {e:#}");
            return ExitCode::from(1);
        }
    };
    let code = match run(&mut cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pfv: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = cli.write_manifest() {
        eprintln!("pfv: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
