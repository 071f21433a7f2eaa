//! Subcommands of the `losr` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use losr_core::freeset::{self, MembershipReport, MembershipVerdict};
use losr_core::games::{self, Game};
use losr_core::linalg::{states, CMatrix};
use losr_core::resources::{self, boxes, validate, Assemblage, CorrelationTable, Party, PartySystems, PartyWiring};
use losr_core::seesaw::{performance_seesaw, SeesawConfig};
use losr_core::transforms::{self, LosrTransform};
use losr_core::types::{self, GlobalType, PartitionType, SystemType, Verdict};
use losr_core::{LosrError, Resource};

use crate::acceptance;
use crate::report::{human_lines, InputDigest, RunReport, Status};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Core(#[from] LosrError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "losr", version, about = "LOSR resource theory toolkit: resources, encoders, games and free-set tests")]
pub struct Cli {
    /// Numerical tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Emit the run report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Iteration budget for iterative solvers.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Random restarts for the see-saw search.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
    /// Raw argument list echoed into the run report.
    #[arg(skip)]
    pub argv: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MembershipKind {
    /// Box in the local polytope.
    Local,
    /// State with positive partial transpose.
    Ppt,
    /// Assemblage with a local hidden state model.
    Lhs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a resource file: Hermitian, CP, TP, nonsignaling, classical factors dephased.
    Validate { file: PathBuf },
    /// Apply the semiquantum encoder to one party's quantum output.
    Encode {
        file: PathBuf,
        #[arg(long, default_value = "A")]
        party: String,
        #[arg(long, default_value = "sq")]
        scheme: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Invert the semiquantum encoder on one party.
    Decode {
        file: PathBuf,
        #[arg(long, default_value = "A")]
        party: String,
        #[arg(long, default_value = "sq")]
        scheme: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Apply a transform (name such as `sq-encode:A:2` or a JSON file).
    Apply {
        transform: String,
        file: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Value of a game on a resource.
    Eval { game: String, file: PathBuf },
    /// Free-set membership with a certificate.
    Membership {
        kind: MembershipKind,
        file: PathBuf,
        /// Local dimensions `dA,dB` when the file holds a bare density matrix.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// Single-copy LOSR convertibility between boxes.
    ConvertBox { p: PathBuf, q: PathBuf },
    /// Does type `t` encode the nonclassicality of type `u`?
    TypeOrder { t: String, u: String },
    /// See-saw lower bound on a game's value over LOSR transforms of a resource.
    Seesaw {
        game: String,
        file: PathBuf,
        #[arg(long, default_value = "I")]
        mem_a: String,
        #[arg(long, default_value = "I")]
        mem_b: String,
        /// Write the best transform here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Acceptance {
        /// Run only this criterion (1-8).
        #[arg(long)]
        only: Option<usize>,
    },
    /// Write a built-in example file.
    Example {
        /// One of: phi-plus, singlet, werner:<p>, pr-box, local-box, uniform-box,
        /// tsirelson-box, singlet-assemblage, werner-assemblage:<p>, swap, chsh.
        name: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

struct Ctx<'a> {
    cli: &'a Cli,
    digest: InputDigest,
}

impl Ctx<'_> {
    fn read(&mut self, path: &Path) -> Result<Value, CliError> {
        let bytes = std::fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.digest.add(&path.display().to_string(), &bytes);
        serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    fn parse<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let v = self.read(path)?;
        serde_json::from_value(v).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    fn named(&mut self, name: &str) {
        self.digest.add("name", name.as_bytes());
    }

    fn resource(&mut self, path: &Path) -> Result<Resource, CliError> {
        let v = self.read(path)?;
        resource_from_value(v, path)
    }

    fn game(&mut self, spec: &str) -> Result<Game, CliError> {
        if let Some(rest) = spec.strip_prefix("pushforward:") {
            let (inner, enc) = rest
                .rsplit_once(':')
                .ok_or_else(|| CliError::Usage("expected pushforward:<game>:<encoder>".into()))?;
            if enc != "sq" {
                return Err(CliError::Usage(format!("unknown encoder '{}', expected 'sq'", enc)));
            }
            let g = self.game(inner)?;
            let (e, d) = games::sq_pair(g.wiring());
            return Ok(games::pushforward(&g, &e, &d)?);
        }
        if let Some(file) = spec.strip_prefix("witness:") {
            let w: CMatrix = self.parse(Path::new(file))?;
            let d = (w.rows() as f64).sqrt().round() as usize;
            if d * d != w.rows() {
                return Err(CliError::Usage(format!(
                    "witness of size {} does not split into equal local dims",
                    w.rows()
                )));
            }
            return Ok(games::witness_game_on_states(&w, d, d)?);
        }
        if Path::new(spec).exists() {
            return self.parse(Path::new(spec));
        }
        self.named(spec);
        Ok(Game::builtin(spec)?)
    }

    fn transform(&mut self, spec: &str) -> Result<LosrTransform, CliError> {
        if Path::new(spec).exists() {
            return self.parse(Path::new(spec));
        }
        self.named(spec);
        Ok(LosrTransform::from_name(spec)?)
    }
}

fn resource_from_value(v: Value, path: &Path) -> Result<Resource, CliError> {
    let json_err = |source| CliError::Json {
        path: path.to_path_buf(),
        source,
    };
    if v.get("P").is_some() {
        let p: CorrelationTable = serde_json::from_value(v).map_err(json_err)?;
        return Ok(resources::from_box(&p)?);
    }
    if v.get("sigma").is_some() {
        let a: Assemblage = serde_json::from_value(v).map_err(json_err)?;
        let nx = a.sigma.len();
        return Ok(resources::from_assemblage(&a, nx)?);
    }
    serde_json::from_value(v).map_err(json_err)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, s + "\n").map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn verdict_status(v: MembershipVerdict) -> Status {
    match v {
        MembershipVerdict::Free => Status::Ok,
        MembershipVerdict::NonFree => Status::Negative,
        MembershipVerdict::Inconclusive => Status::Inconclusive,
    }
}

fn membership_outputs(r: &MembershipReport) -> (Value, Status) {
    (serde_json::to_value(r).expect("serializable"), verdict_status(r.verdict))
}

/// Output of a subcommand before it is wrapped in a report.
struct Outcome {
    outputs: Value,
    status: Status,
    /// Text printed instead of the key/value view.
    text: Option<String>,
}

impl Outcome {
    fn new(outputs: Value, status: Status) -> Self {
        Outcome {
            outputs,
            status,
            text: None,
        }
    }
}

fn encode_decode(ctx: &mut Ctx, file: &Path, party: &str, scheme: &str, out: Option<&Path>, encode: bool) -> Result<Outcome, CliError> {
    if scheme != "sq" {
        return Err(CliError::Usage(format!("unknown scheme '{}', expected 'sq'", scheme)));
    }
    let party: Party = party.parse()?;
    let r = ctx.resource(file)?;
    let sys = r.wiring().party(party);
    let t = if encode {
        if !sys.output.is_quantum() {
            return Err(CliError::Core(LosrError::TypeMismatch(format!(
                "party {:?} has output {}; the semiquantum encoder needs a quantum output",
                party, sys.output
            ))));
        }
        transforms::sq_encode(party, sys.output.dim())
    } else {
        let d2 = sys.output.dim();
        let d = (d2 as f64).sqrt().round() as usize;
        if sys.output.is_quantum() || d * d != d2 || d < 2 {
            return Err(CliError::Core(LosrError::TypeMismatch(format!(
                "party {:?} has output {}; expected classical output of square dimension",
                party, sys.output
            ))));
        }
        transforms::sq_decode(party, d)
    };
    let res = transforms::apply(&t, &r)?;
    finish_resource(&res, out)
}

fn finish_resource(res: &Resource, out: Option<&Path>) -> Result<Outcome, CliError> {
    let mut outputs = json!({
        "type": res.global_type().to_string(),
        "wiring": res.wiring(),
    });
    let text = match out {
        Some(p) => {
            write_json(p, res)?;
            outputs["written"] = json!(p.display().to_string());
            None
        }
        None => {
            outputs["resource"] = serde_json::to_value(res).expect("serializable");
            Some(serde_json::to_string_pretty(res).expect("serializable"))
        }
    };
    Ok(Outcome {
        outputs,
        status: Status::Ok,
        text,
    })
}

fn type_order(t: &str, u: &str) -> Result<Outcome, CliError> {
    let gt: GlobalType = t.parse()?;
    let gu: GlobalType = u.parse()?;
    let v = if gt.parties().len() == 1 && gu.parties().len() == 1 {
        let pt: PartitionType = t.parse()?;
        let pu: PartitionType = u.parse()?;
        types::partition_encodes(pt, pu)
    } else {
        types::global_encodes_sufficient(&gt, &gu)?
    };
    let status = match v.value {
        Verdict::Yes => Status::Ok,
        Verdict::No => Status::Negative,
        Verdict::Unknown => Status::Inconclusive,
    };
    Ok(Outcome::new(
        json!({"t": t, "u": u, "verdict": v.value, "provenance": v.provenance.key()}),
        status,
    ))
}

fn example(name: &str, out: Option<&Path>) -> Result<Outcome, CliError> {
    let zx = || vec![boxes::xz_projective(0.0), boxes::xz_projective(std::f64::consts::FRAC_PI_2)];
    let value: Value = match name.split_once(':') {
        Some(("werner", p)) => {
            let p: f64 = p.parse().map_err(|_| CliError::Usage(format!("bad Werner parameter '{}'", p)))?;
            serde_json::to_value(resources::from_state(&states::werner(p), 2, 2)?)
        }
        Some(("werner-assemblage", p)) => {
            let p: f64 = p.parse().map_err(|_| CliError::Usage(format!("bad Werner parameter '{}'", p)))?;
            serde_json::to_value(Assemblage::from_state_measurements(&states::werner(p), 2, 2, &zx())?)
        }
        _ => match name {
            "phi-plus" => serde_json::to_value(resources::from_state(&states::phi_plus(), 2, 2)?),
            "singlet" => serde_json::to_value(resources::from_state(&states::singlet(), 2, 2)?),
            "pr-box" => serde_json::to_value(boxes::pr_box()),
            "local-box" => serde_json::to_value(boxes::deterministic(2, 2, &[0, 0], &[0, 0])),
            "uniform-box" => serde_json::to_value(boxes::uniform(2, 2, 2, 2)),
            "tsirelson-box" => {
                let pi = std::f64::consts::PI;
                serde_json::to_value(boxes::from_quantum(
                    &states::phi_plus(),
                    &zx(),
                    &[boxes::xz_projective(pi / 4.0), boxes::xz_projective(-pi / 4.0)],
                ))
            }
            "singlet-assemblage" => {
                serde_json::to_value(Assemblage::from_state_measurements(&states::singlet(), 2, 2, &zx())?)
            }
            "swap" => {
                // a signaling channel, for the validator
                let u = CMatrix::from_fn(4, 4, |o, i| {
                    if o == (i % 2) * 2 + i / 2 {
                        losr_core::linalg::ONE
                    } else {
                        losr_core::linalg::ZERO
                    }
                });
                let j = losr_core::ChoiOperator::from_kraus(&[u])?;
                let q = PartySystems::new(SystemType::quantum(2), SystemType::quantum(2));
                Ok(json!({
                    "wiring": PartyWiring::new(q, q),
                    "choi": j.matrix(),
                }))
            }
            "chsh" => serde_json::to_value(games::chsh()),
            _ => return Err(CliError::Usage(format!("unknown example '{}'", name))),
        },
    }
    .expect("serializable");
    match out {
        Some(p) => {
            write_json(p, &value)?;
            Ok(Outcome::new(json!({"example": name, "written": p.display().to_string()}), Status::Ok))
        }
        None => Ok(Outcome {
            text: Some(serde_json::to_string_pretty(&value).expect("serializable")),
            outputs: json!({"example": name, "content": value}),
            status: Status::Ok,
        }),
    }
}

fn execute(ctx: &mut Ctx) -> Result<Outcome, CliError> {
    let cli = ctx.cli;
    let tol = cli.tol;
    match &cli.command {
        Command::Validate { file } => {
            let r = ctx.resource(file)?;
            let v = validate(&r, tol);
            let status = if v.is_empty() { Status::Ok } else { Status::Negative };
            Ok(Outcome::new(
                json!({
                    "type": r.global_type().to_string(),
                    "valid": v.is_empty(),
                    "violations": v,
                }),
                status,
            ))
        }
        Command::Encode { file, party, scheme, out } => encode_decode(ctx, file, party, scheme, out.as_deref(), true),
        Command::Decode { file, party, scheme, out } => encode_decode(ctx, file, party, scheme, out.as_deref(), false),
        Command::Apply { transform, file, out } => {
            let t = ctx.transform(transform)?;
            let r = ctx.resource(file)?;
            let res = transforms::apply(&t, &r)?;
            finish_resource(&res, out.as_deref())
        }
        Command::Eval { game, file } => {
            let g = ctx.game(game)?;
            let r = ctx.resource(file)?;
            if g.wiring().dims() != r.wiring().dims() || g.global_type() != r.global_type() {
                let hint = if r.wiring().a.output.is_quantum() || r.wiring().b.output.is_quantum() {
                    "; quantum outputs can be turned into classical ones with `losr encode`"
                } else {
                    ""
                };
                return Err(CliError::Core(LosrError::TypeMismatch(format!(
                    "game is for {}, resource is {}{}",
                    g.wiring(),
                    r.wiring(),
                    hint
                ))));
            }
            let v = games::evaluate(&g, &r)?;
            Ok(Outcome::new(json!({"type": g.global_type().to_string(), "value": v}), Status::Ok))
        }
        Command::Membership { kind, file, dims } => {
            let v = ctx.read(file)?;
            let report = match kind {
                MembershipKind::Local => {
                    let p: CorrelationTable = if v.get("P").is_some() {
                        serde_json::from_value(v).map_err(|source| CliError::Json {
                            path: file.clone(),
                            source,
                        })?
                    } else {
                        resources::to_box(&resource_from_value(v, file)?)?
                    };
                    freeset::box_is_local(&p, tol)?
                }
                MembershipKind::Ppt => {
                    let (rho, da, db) = if v.get("rows").is_some() {
                        let rho: CMatrix = serde_json::from_value(v).map_err(|source| CliError::Json {
                            path: file.clone(),
                            source,
                        })?;
                        match dims.as_deref() {
                            Some([a, b]) => (rho, *a, *b),
                            _ => return Err(CliError::Usage("a bare density matrix needs --dims dA,dB".into())),
                        }
                    } else {
                        let r = resource_from_value(v, file)?;
                        let w = r.wiring();
                        if w.dim_in() != 1 {
                            return Err(CliError::Core(LosrError::TypeMismatch(format!(
                                "PPT test needs a state (trivial inputs), got {}",
                                w
                            ))));
                        }
                        (r.matrix().clone(), w.a.output.dim(), w.b.output.dim())
                    };
                    freeset::state_is_ppt(&rho, da, db, tol)?
                }
                MembershipKind::Lhs => {
                    let a: Assemblage = if v.get("sigma").is_some() {
                        serde_json::from_value(v).map_err(|source| CliError::Json {
                            path: file.clone(),
                            source,
                        })?
                    } else {
                        resources::to_assemblage(&resource_from_value(v, file)?)?
                    };
                    freeset::assemblage_is_unsteerable(&a, tol)?
                }
            };
            let (outputs, status) = membership_outputs(&report);
            Ok(Outcome::new(outputs, status))
        }
        Command::ConvertBox { p, q } => {
            let p: CorrelationTable = ctx.parse(p)?;
            let q: CorrelationTable = ctx.parse(q)?;
            let report = freeset::box_convertible(&p, &q, tol)?;
            let (outputs, status) = membership_outputs(&report);
            Ok(Outcome::new(outputs, status))
        }
        Command::TypeOrder { t, u } => {
            ctx.named(t);
            ctx.named(u);
            type_order(t, u)
        }
        Command::Seesaw { game, file, mem_a, mem_b, out } => {
            let g = ctx.game(game)?;
            let r = ctx.resource(file)?;
            let defaults = SeesawConfig::default();
            let cfg = SeesawConfig {
                mem_a: mem_a.parse()?,
                mem_b: mem_b.parse()?,
                restarts: cli.restarts.unwrap_or(defaults.restarts),
                iters: cli.iters.unwrap_or(defaults.iters),
                seed: cli.seed,
                ..defaults
            };
            let res = performance_seesaw(&g, &r, &cfg)?;
            let mut outputs = json!({
                "lower_bound": res.lower_bound,
                "rounds": res.history.len(),
                "restart_values": res.restart_values,
            });
            if let Some(p) = out {
                write_json(p, &res.transform)?;
                outputs["written"] = json!(p.display().to_string());
            }
            Ok(Outcome::new(outputs, Status::Ok))
        }
        Command::Acceptance { only } => {
            let results = match only {
                Some(k) => vec![acceptance::run(*k, cli.seed)],
                None => acceptance::run_all(cli.seed),
            };
            let ok = results.iter().all(|r| r.passed);
            let text = results.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n");
            Ok(Outcome {
                outputs: json!({ "passed": ok, "criteria": results }),
                status: if ok { Status::Ok } else { Status::Negative },
                text: Some(text),
            })
        }
        Command::Example { name, out } => {
            ctx.named(name);
            example(name, out.as_deref())
        }
    }
}

/// Run a parsed command; returns the text to print and the exit status.
pub fn run(cli: &Cli) -> (String, Status) {
    let start = Instant::now();
    let mut ctx = Ctx {
        cli,
        digest: InputDigest::default(),
    };
    let result = execute(&mut ctx);
    let seconds = start.elapsed().as_secs_f64();
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(e) => (
            Outcome::new(json!({ "error": e.to_string() }), Status::Usage),
            Some(e.to_string()),
        ),
    };
    let report = RunReport {
        command: if cli.argv.is_empty() {
            vec![format!("{:?}", cli.command)]
        } else {
            cli.argv.clone()
        },
        inputs_digest: ctx.digest.finish(),
        status: outcome.status,
        outputs: outcome.outputs,
        seconds,
        tol: cli.tol,
        seed: cli.seed,
    };
    let text = if cli.json {
        serde_json::to_string_pretty(&report).expect("serializable")
    } else if let Some(e) = error {
        format!("error: {}", e)
    } else if let Some(t) = outcome.text {
        t
    } else {
        let mut lines = Vec::new();
        human_lines(&report.outputs, "", &mut lines);
        lines.push(format!("{:<28} {:?} ({:.3}s)", "status", report.status, seconds));
        lines.join("\n")
    };
    (text, report.status)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("losr").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn type_order_examples() {
        let (_, s) = run(&parse(&["type-order", "Q->C", "I->Q"]));
        assert_eq!(s, Status::Ok);
        let (_, s) = run(&parse(&["type-order", "C->Q", "Q->C"]));
        assert_eq!(s, Status::Inconclusive);
        let (_, s) = run(&parse(&["type-order", "CC->CC", "II->QQ"]));
        assert_eq!(s, Status::Negative);
    }

    #[test]
    fn bad_type_is_usage_error() {
        let (text, s) = run(&parse(&["type-order", "X->C", "I->Q"]));
        assert_eq!(s, Status::Usage);
        assert!(text.starts_with("error:"));
    }

    #[test]
    fn json_report_has_digest() {
        let (text, _) = run(&parse(&["--json", "type-order", "Q->C", "I->Q"]));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["outputs"]["verdict"], "Yes");
        assert_eq!(v["outputs"]["provenance"], "semiquantum-games");
        assert_eq!(v["inputs_digest"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn unknown_example() {
        let (_, s) = run(&parse(&["example", "nope"]));
        assert_eq!(s, Status::Usage);
    }
}
