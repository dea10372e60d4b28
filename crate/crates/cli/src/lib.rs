//! Command-line front end: file loading, command dispatch and report output.

mod config;
mod error;
mod report;

use std::path::{Path, PathBuf};

use eoplab_core::battery::{self, BatteryConfig, Counterexample};
use eoplab_core::channels::{protocol_from_json, OneWayLOCC};
use eoplab_core::ensemble::{self, average_state, cq_state, ensemble_from_json, Ensemble};
use eoplab_core::eop::{entanglement_of_purification, Cut};
use eoplab_core::qmat::io::density_from_json;
use eoplab_core::qmat::{self, DensityMatrix};
use eoplab_core::viscode::{self, build_visible_code, converse_chain_check, verify_lemma, LemmaRow};
use serde_json::{json, Value};

pub use config::{Command, Format, RunConfig};
pub use error::CliError;
pub use report::Report;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RESOURCE: u8 = 3;

/// Slack allowed on `E_p ≤ min(H_A, H_B)` before `eop` reports a violation.
const BOUND_SLACK: f64 = 1e-6;

/// Outcome of a run: the report (already written) and the process exit code.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: u8,
    pub replay_files: Vec<PathBuf>,
}

/// Result, pass flag and failing instance of a single-instance command.
type Single = (Value, bool, Option<Counterexample>);
/// Result, pass flag and named failing instances of the battery.
type Battery = (Value, bool, Vec<(String, Counterexample)>);

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Core errors raised while parsing a file are input errors located in that file.
fn parse_with<T>(path: &Path, f: impl FnOnce(&str) -> eoplab_core::Result<T>) -> Result<T, CliError> {
    use eoplab_core::Error;
    f(&read(path)?).map_err(|e| match e {
        Error::Resource(_) => CliError::Core(e),
        other => CliError::parse(path, other),
    })
}

fn load_state(path: &Path) -> Result<DensityMatrix, CliError> {
    parse_with(path, density_from_json)
}

fn load_ensemble(path: &Path) -> Result<Ensemble, CliError> {
    parse_with(path, ensemble_from_json)
}

fn load_protocol(path: &Path) -> Result<OneWayLOCC, CliError> {
    parse_with(path, protocol_from_json)
}

fn parse_cut(spec: &str) -> Result<Cut, CliError> {
    let (a, b) = spec
        .split_once('|')
        .ok_or_else(|| CliError::Usage(format!("cut {spec:?} is not of the form A1,A2|B1")))?;
    let labels = |s: &str| s.split(',').map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect::<Vec<_>>();
    let (a, b) = (labels(a), labels(b));
    let a: Vec<&str> = a.iter().map(String::as_str).collect();
    let b: Vec<&str> = b.iter().map(String::as_str).collect();
    Ok(Cut::new(&a, &b))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn eop(cfg: &RunConfig) -> Result<Single, CliError> {
    let path = cfg.require(&cfg.state, "state")?;
    let rho = load_state(path)?;
    let cut = match &cfg.cut {
        Some(spec) => parse_cut(spec)?,
        None => Cut::for_shape(rho.shape())?,
    };
    let res = entanglement_of_purification(&rho, &cut, &cfg.optimizer())?;
    let bip = cut.bipartite(&rho)?;
    let ha = qmat::von_neumann_entropy(&bip.partial_trace(&["A"])?);
    let hb = qmat::von_neumann_entropy(&bip.partial_trace(&["B"])?);
    let passed = res.value <= ha.min(hb) + BOUND_SLACK;
    let result = json!({
        "value": res.value,
        "status": res.status,
        "restarts_used": res.restarts_used,
        "ancilla": res.ancilla,
        "entropy_a": ha,
        "entropy_b": hb,
        "cut": {"a": cut.a_labels, "b": cut.b_labels},
        "restart_values": res.restart_values,
    });
    let cx = (!passed).then(|| Counterexample {
        files: vec![("state".into(), read(path).unwrap_or_default())],
        note: format!("E_p = {} exceeds min(H_A, H_B) = {}", res.value, ha.min(hb)),
    });
    Ok((result, passed, cx))
}

fn hext(cfg: &RunConfig) -> Result<Single, CliError> {
    let e = load_ensemble(cfg.require(&cfg.ensemble, "ensemble")?)?;
    let ref_dim = cfg.ref_dim.unwrap_or(e.state_dim());
    let res = ensemble::h_ext(&e, ref_dim, &cfg.optimizer())?;
    let result = json!({
        "value": res.value,
        "ref_dim": res.ref_dim,
        "status": res.status,
        "restarts_used": res.restarts_used,
        "average_entropy": qmat::von_neumann_entropy(&average_state(&e)),
        "argmin": res.argmin_params(),
    });
    Ok((result, true, None))
}

fn code_build(cfg: &RunConfig) -> Result<Single, CliError> {
    let ppath = cfg.require(&cfg.protocol, "protocol")?;
    let kappa = load_protocol(ppath)?;
    let l = cfg.require_l()?;
    let code = build_visible_code(&kappa, l)?;
    let q = code.outcome_distribution().unwrap_or(&[]).to_vec();
    let induced: Vec<(f64, DensityMatrix)> = (0..code.alphabet_size())
        .map(|x| (q[x], code.induced_state(x).cloned().unwrap_or_else(|| code.decode(x))))
        .collect();
    let induced = Ensemble::from_pairs(induced)?;
    let err = code.reconstruction_error();
    let passed = err <= 1e-10 && code.size() == l * code.cc();
    let encoder: Vec<Value> = (0..code.alphabet_size())
        .map(|x| Value::from(code.encoder(x).iter().map(|b| json!({"branch": b.branch, "prob": b.prob})).collect::<Vec<_>>()))
        .collect();
    let result = json!({
        "L": code.l(),
        "cc": code.cc(),
        "size": code.size(),
        "log_size": (code.size() as f64).log2(),
        "outcome_distribution": q,
        "fallback_letters": code.fallback_letters(),
        "reconstruction_error": err,
        "encoder": encoder,
        "induced_ensemble": serde_json::from_str::<Value>(&ensemble::ensemble_to_json(&induced)).expect("valid JSON"),
    });
    let cx = (!passed).then(|| Counterexample {
        files: vec![("protocol".into(), read(ppath).unwrap_or_default())],
        note: format!("L = {l}; reconstruction error {err}"),
    });
    Ok((result, passed, cx))
}

fn protocol_instance(cfg: &RunConfig) -> Result<(OneWayLOCC, usize, Ensemble, Counterexample), CliError> {
    let ppath = cfg.require(&cfg.protocol, "protocol")?;
    let epath = cfg.require(&cfg.ensemble, "ensemble")?;
    let kappa = load_protocol(ppath)?;
    let e = load_ensemble(epath)?;
    let l = cfg.require_l()?;
    let cx = Counterexample {
        files: vec![("protocol".into(), read(ppath)?), ("ensemble".into(), read(epath)?)],
        note: format!("L = {l}"),
    };
    Ok((kappa, l, e, cx))
}

fn lemma_verify(cfg: &RunConfig) -> Result<Single, CliError> {
    let (kappa, l, e, cx) = protocol_instance(cfg)?;
    let r = verify_lemma(&kappa, l, &e)?;
    let passed = r.holds && r.chain_holds;
    let mut result = to_value(&r);
    result["row"] = to_value(&LemmaRow::new(cfg.seed, &e, &r));
    Ok((result, passed, (!passed).then_some(cx)))
}

fn converse_check(cfg: &RunConfig) -> Result<Single, CliError> {
    let (kappa, l, e, cx) = protocol_instance(cfg)?;
    let code = build_visible_code(&kappa, l)?;
    let r = converse_chain_check(&code, &e, &cfg.optimizer())?;
    let passed = r.holds;
    Ok((to_value(&r), passed, (!passed).then_some(cx)))
}

fn gen_error(cfg: &RunConfig) -> Result<Single, CliError> {
    let kappa = load_protocol(cfg.require(&cfg.protocol, "protocol")?)?;
    let l = cfg.require_l()?;
    let (target, source) = match (&cfg.state, &cfg.ensemble) {
        (Some(p), None) => (load_state(p)?, "state"),
        (None, Some(p)) => (cq_state(&load_ensemble(p)?)?.into_density(), "ensemble"),
        _ => return Err(CliError::Usage("gen-error needs exactly one of --state and --ensemble".into())),
    };
    let value = viscode::state_generation_error(&kappa, l, &target)?;
    Ok((json!({"value": value, "L": l, "target": source}), true, None))
}

fn suite(cfg: &RunConfig) -> Result<Battery, CliError> {
    let bcfg = if cfg.quick { BatteryConfig::quick(cfg.seed) } else { BatteryConfig::full(cfg.seed) };
    let checks = battery::run_battery(&bcfg, |c| eprintln!("{}", c.line()))?;
    let passed = checks.iter().all(|c| c.passed);
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "passed": c.passed,
                "instances": c.instances,
                "worst": c.worst,
                "summary": c.summary,
                "counterexample": c.counterexample.as_ref().map(|cx| cx.note.clone()),
            })
        })
        .collect();
    let failures = checks
        .into_iter()
        .filter_map(|c| c.counterexample.map(|cx| (c.name.to_string(), cx)))
        .collect();
    Ok((json!({"battery": to_value(&bcfg), "checks": rows}), passed, failures))
}

fn write_replay(cfg: &RunConfig, name: &str, cx: &Counterexample) -> Result<Vec<PathBuf>, CliError> {
    let dir = cfg
        .replay_dir
        .clone()
        .or_else(|| cfg.out.as_ref().and_then(|o| o.parent()).map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut written = Vec::new();
    for (stem, text) in &cx.files {
        let p = dir.join(format!("replay-{name}-seed{}-{stem}.json", cfg.seed));
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        written.push(p);
    }
    let p = dir.join(format!("replay-{name}-seed{}-note.txt", cfg.seed));
    std::fs::write(&p, format!("{}\n", cx.note)).map_err(|e| CliError::io(&p, e))?;
    written.push(p);
    Ok(written)
}

/// Run one command, write its report, and write replay files for any violation.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (result, passed, failures) = match cfg.command {
        Command::Suite => suite(cfg)?,
        c => {
            let (result, passed, cx) = match c {
                Command::Eop => eop(cfg)?,
                Command::Hext => hext(cfg)?,
                Command::CodeBuild => code_build(cfg)?,
                Command::LemmaVerify => lemma_verify(cfg)?,
                Command::ConverseCheck => converse_check(cfg)?,
                Command::GenError => gen_error(cfg)?,
                Command::Suite => unreachable!(),
            };
            (result, passed, cx.map(|cx| (c.name().to_string(), cx)).into_iter().collect())
        }
    };
    let mut replay_files = Vec::new();
    for (name, cx) in &failures {
        replay_files.extend(write_replay(cfg, name, cx)?);
    }
    let report = Report { command: cfg.command.name().into(), seed: cfg.seed, passed, config: cfg.clone(), result };
    report.write(cfg)?;
    let exit_code = if passed { EXIT_PASS } else { EXIT_VIOLATION };
    Ok(Outcome { report, exit_code, replay_files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_files_land_next_to_the_report() {
        let dir = std::env::temp_dir().join(format!("eoplab-replay-{}", std::process::id()));
        let mut cfg = RunConfig::new(Command::LemmaVerify);
        cfg.seed = 4;
        cfg.out = Some(dir.join("report.json"));
        let cx = Counterexample { files: vec![("protocol".into(), "{}".into())], note: "L = 2".into() };
        let written = write_replay(&cfg, "lemma-chain", &cx).unwrap();
        assert_eq!(written.len(), 2);
        assert!(written[0].ends_with("replay-lemma-chain-seed4-protocol.json"));
        assert_eq!(std::fs::read_to_string(&written[1]).unwrap(), "L = 2\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn cut_specs() {
        let c = parse_cut("A1, A2|B").unwrap();
        assert_eq!(c.a_labels, ["A1", "A2"]);
        assert_eq!(c.b_labels, ["B"]);
        assert!(parse_cut("AB").is_err());
    }
}
