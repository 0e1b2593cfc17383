//! Acceptance run: one PASS/FAIL line per criterion, with wall-clock against its budget.
//!
//! Criteria 6 and 9 are known to fail at the stated thresholds (see the README); they are
//! reported as FAIL but do not fail the process. Any other failure does.

use std::collections::BTreeMap;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nelsonlab::config::{Experiment, ExperimentConfig};
use nelsonlab::experiments::{self, Measurement, Status};

const KNOWN_FAILURES: [u32; 2] = [6, 9];

struct Criterion {
    id: u32,
    title: &'static str,
    experiment: Experiment,
    budget_secs: u64,
    checks: &'static [&'static str],
}

const CRITERIA: [Criterion; 11] = [
    Criterion {
        id: 1,
        title: "IBC factorization identity",
        experiment: Experiment::IbcIdentity,
        budget_secs: 60,
        checks: &["factorization residual / |H|"],
    },
    Criterion {
        id: 2,
        title: "IBC spectrum equals spectrum of H + E",
        experiment: Experiment::IbcIdentity,
        budget_secs: 60,
        checks: &["eigenvalue gap H_ibc vs H+E"],
    },
    Criterion {
        id: 3,
        title: "Fock commutation relations",
        experiment: Experiment::WeylIdentities,
        budget_secs: 10,
        checks: &[
            "ccr [a(f),a*(g)]=<f,g>",
            "second quantization [dG(h),a*(f)]=a*(hf)",
            "canonical [Phi(f),Pi(g)]=iRe<f,g>",
        ],
    },
    Criterion {
        id: 4,
        title: "Weyl conjugation and Gross identities",
        experiment: Experiment::WeylIdentities,
        budget_secs: 30,
        checks: &[
            "weyl field conjugation",
            "weyl second-quantized conjugation",
            "gross identity",
            "weyl field conjugation monotone in N",
            "weyl second-quantized conjugation monotone in N",
            "gross identity monotone in N",
        ],
    },
    Criterion {
        id: 5,
        title: "lattice-exact symbol calculus",
        experiment: Experiment::PsidoCalculus,
        budget_secs: 30,
        checks: &[
            "standard quantization vs direct sum",
            "right quantization vs direct sum",
            "change of quantization",
            "moyal product",
            "adjoint symbol",
        ],
    },
    Criterion {
        id: 6,
        title: "parametrix gain for <xi>^2",
        experiment: Experiment::PsidoCalculus,
        budget_secs: 10,
        checks: &["parametrix <xi>^2 gain*residual_k vs residual_0"],
    },
    Criterion {
        id: 7,
        title: "renormalized resolvent differences decrease",
        experiment: Experiment::RenormConvergence,
        budget_secs: 300,
        checks: &["subtracted resolvent differences strictly decrease", "subtraction reduces the resolvent difference"],
    },
    Criterion {
        id: 8,
        title: "vacuum energy log divergence and diagonal subtraction",
        experiment: Experiment::VacuumEnergy,
        budget_secs: 60,
        checks: &["E_lambda vs ln(lambda) linear fit R^2", "diagonal subtracted relative variation"],
    },
    Criterion {
        id: 9,
        title: "domain-regularity growth at p = 0.5",
        experiment: Experiment::DomainRegularity,
        budget_secs: 300,
        checks: &["growth(p=0.5) >= ratio * growth(p=0.4)"],
    },
    Criterion {
        id: 10,
        title: "rearrangement, Hardy-Littlewood, Peetre, Omega scaling",
        experiment: Experiment::AppendixInequalities,
        budget_secs: 120,
        checks: &[
            "Hardy-Littlewood violations",
            "Peetre violations",
            "rearrangement vs (|x|^d+L^d)^(-p/d) (error / shell variation)",
            "fitted Omega exponent deviation / |predicted|",
        ],
    },
    Criterion {
        id: 11,
        title: "Schur and Cotlar-Stein bounds dominate the norm",
        experiment: Experiment::PsidoCalculus,
        budget_secs: 30,
        checks: &["schur bound below spectral norm (count)", "cotlar-stein bound below spectral norm (count)"],
    },
];

struct Verdict {
    pass: bool,
    detail: String,
}

fn judge(c: &Criterion, rows: &[Measurement], elapsed: Duration) -> Verdict {
    let mut matched = 0;
    let mut failed = Vec::new();
    for name in c.checks {
        let hits: Vec<&Measurement> = rows.iter().filter(|r| r.check == *name && r.status != Status::Info).collect();
        if hits.is_empty() {
            failed.push(format!("missing check '{name}'"));
        }
        matched += hits.len();
        for r in hits.into_iter().filter(|r| !r.passed()) {
            failed.push(format!("{} [{}]: {:.4e} {} {:.4e}", r.check, r.parameters, r.lhs, r.relation.symbol(), r.rhs));
        }
    }
    let secs = elapsed.as_secs_f64();
    if secs > c.budget_secs as f64 {
        failed.push(format!("runtime {secs:.1} s over budget"));
    }
    let timing = format!("{matched} checks, {secs:.1} s of {} s", c.budget_secs);
    if failed.is_empty() {
        Verdict { pass: true, detail: timing }
    } else {
        Verdict { pass: false, detail: format!("{timing}; {}", failed.join("; ")) }
    }
}

fn determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("nelsonlab-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    let run = |sub: &str| -> Result<Vec<u8>, String> {
        let out = dir.join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_nelsonlab"))
            .args(["run", "--experiment", "weyl-identities", "--seed", "7", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("exit {:?}", status.status.code()));
        }
        fs::read(out.join("results.csv")).map_err(|e| e.to_string())
    };
    let verdict = match (run("first"), run("second")) {
        (Ok(a), Ok(b)) if a == b => Verdict { pass: true, detail: format!("{} bytes identical", a.len()) },
        (Ok(_), Ok(_)) => Verdict { pass: false, detail: "results.csv differs between runs".into() },
        (Err(e), _) | (_, Err(e)) => Verdict { pass: false, detail: e },
    };
    let _ = fs::remove_dir_all(&dir);
    verdict
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let mut runs: BTreeMap<&'static str, (Vec<Measurement>, Duration)> = BTreeMap::new();
    let mut unexpected = 0;
    let mut passed = 0;
    for c in &CRITERIA {
        let key = c.experiment.name();
        if !runs.contains_key(key) {
            let start = Instant::now();
            let rows = match experiments::run(c.experiment, &cfg) {
                Ok(rows) => rows,
                Err(e) => {
                    println!("FAIL  {:>2}  {}: {key} aborted: {e}", c.id, c.title);
                    unexpected += 1;
                    continue;
                }
            };
            runs.insert(key, (rows, start.elapsed()));
        }
        let (rows, elapsed) = &runs[key];
        let v = judge(c, rows, *elapsed);
        report(c.id, c.title, &v, &mut passed, &mut unexpected);
    }
    let v = determinism();
    report(12, "CLI determinism", &v, &mut passed, &mut unexpected);
    println!("acceptance: {passed}/12 criteria pass; {unexpected} unexpected failures");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report(id: u32, title: &str, v: &Verdict, passed: &mut usize, unexpected: &mut usize) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let note = if !v.pass && KNOWN_FAILURES.contains(&id) { " (known)" } else { "" };
    println!("{tag}  {id:>2}  {title}{note}: {}", v.detail);
    if v.pass {
        *passed += 1;
    } else if note.is_empty() {
        *unexpected += 1;
    }
}
