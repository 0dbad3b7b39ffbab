//! Acceptance suite: one line per criterion, `PASS`/`FAIL`, measured value
//! and wall time. Exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use ppa_engine::background::Bump;
use ppa_engine::checks;
use ppa_engine::cli::config::{FormBump, GroupChoice, Scenario};
use ppa_engine::cli::experiments::{run_scenario, Context};
use ppa_engine::exec::{self, Mode};
use ppa_engine::ppa::PpaReport;

struct Outcome {
    pass: bool,
    detail: String,
}

fn su2(mut sc: Scenario) -> Scenario {
    sc.group = GroupChoice::Su2;
    sc.a_t = vec![0.1, -0.2, 0.05];
    sc.a_x = vec![0.3, 0.0, -0.1];
    sc
}

fn sized(n: usize) -> Scenario {
    Scenario { nt: n, nx: n, ..Scenario::default() }
}

fn run(sc: &Scenario, only: &[&str]) -> Result<PpaReport, String> {
    let only: Vec<String> = only.iter().map(|s| s.to_string()).collect();
    run_scenario(sc, Some(&only)).map_err(|e| e.to_string())
}

/// Pass if every gated row with the given prefixes passes; report the worst.
fn rows(reps: &[PpaReport], prefixes: &[&str]) -> Outcome {
    let mut worst: Option<(String, f64)> = None;
    let mut failed = vec![];
    let mut seen = 0;
    for rep in reps {
        for r in &rep.residuals {
            if r.tol.is_none() || !prefixes.iter().any(|p| r.name.starts_with(p)) {
                continue;
            }
            seen += 1;
            if !r.pass {
                failed.push(format!("{}={:.3e}", r.name, r.magnitude()));
            }
            if worst.as_ref().is_none_or(|w| r.magnitude() > w.1) {
                worst = Some((r.name.clone(), r.magnitude()));
            }
        }
    }
    match worst {
        None => Outcome { pass: false, detail: "no rows".into() },
        Some(_) if !failed.is_empty() => Outcome { pass: false, detail: failed.join(" ") },
        Some((n, v)) => Outcome { pass: seen > 0, detail: format!("worst {n}={v:.3e} ({seen} rows)") },
    }
}

fn within(o: Outcome, t: Duration, budget: Duration) -> Outcome {
    if t <= budget {
        o
    } else {
        Outcome { pass: false, detail: format!("{} over budget {:?}", o.detail, budget) }
    }
}

fn c1() -> Result<Outcome, String> {
    let sc = sized(16);
    let cx = Context::new(&sc).map_err(|e| e.to_string())?;
    let f = checks::algebra_floor(&cx.dirac, &cx.omega, sc.seed).map_err(|e| e.to_string())?;
    let pass = f.max() <= 1e-12;
    Ok(Outcome {
        pass,
        detail: format!(
            "clifford {:.1e} wedge {:.1e} involution {:.1e} support {:.1e}",
            f.clifford, f.wedge_commutativity, f.involution, f.retarded_support
        ),
    })
}

fn c2() -> Result<Outcome, String> {
    Ok(rows(&[run(&sized(16), &["car"])?], &["car."]))
}

fn c3() -> Result<Outcome, String> {
    Ok(rows(&[run(&sized(16), &["hadamard"])?], &["hadamard."]))
}

fn c4() -> Result<Outcome, String> {
    let sc = Scenario { tau_pairs: 20, ..sized(16) };
    Ok(rows(&[run(&sc, &["tau-iso"])?], &["tau."]))
}

fn c5() -> Result<Outcome, String> {
    Ok(rows(&[run(&sized(16), &["axioms"])?], &["tproducts."]))
}

fn c6() -> Result<Outcome, String> {
    let u1 = run(&sized(24), &["ppa-d1"])?;
    let s = run(&su2(sized(24)), &["ppa-d1"])?;
    Ok(rows(&[u1, s], &["ppa.d1.j.tree", "ppa.d1.dbar_j.tree"]))
}

fn c7() -> Result<Outcome, String> {
    let rep = run(&Scenario::default(), &["convergence"])?;
    let mut o = rows(std::slice::from_ref(&rep), &["convergence.order.", "convergence.floor."]);
    let floors: Vec<&str> = rep.residuals.iter().filter(|r| r.tol.is_some() && r.name.starts_with("convergence.floor.")).map(|r| r.name.as_str()).collect();
    if !floors.is_empty() {
        o.detail.push_str(&format!("; at roundoff on every rung, no order to fit: {}", floors.join(",")));
    }
    Ok(o)
}

fn c8() -> Result<Outcome, String> {
    let u1 = run(&sized(16), &["ward"])?;
    let s = run(&su2(sized(16)), &["ward"])?;
    Ok(rows(&[u1, s], &["ward."]))
}

fn c9() -> Result<Outcome, String> {
    // narrow probes so the bumps fit an 8-step time axis
    let b = |amp: f64, t0: f64, x0: f64| Bump { amp, t0, x0, width: 0.1 };
    let f = |mu: usize, bump: Bump| FormBump { mu, index: 0, bump };
    let sc = Scenario {
        probe_width: 0.1,
        a: Some(vec![f(1, b(0.5, 0.9, 3.0)), f(0, b(-0.3, 0.9, 4.0))]),
        a_prime: Some(vec![f(1, b(0.7, 1.2, 3.0)), f(0, b(0.4, 1.2, 4.0))]),
        ..sized(8)
    };
    let rep = run(&sc, &["polarization"])?;
    let v = rep.get("polarization.value").map_or(f64::NAN, |r| r.magnitude());
    let mut o = rows(&[rep], &["polarization.oracle_diff"]);
    o.detail.push_str(&format!("; |Pi| = {v:.3e}"));
    Ok(o)
}

fn c10() -> Result<Outcome, String> {
    let sc = Scenario { probes: 10, tau_pairs: 5, ..sized(12) };
    let only = ["car", "hadamard", "tau-iso", "ppa-d1", "ward", "polarization"];
    exec::set_mode(Mode::Parallel);
    let a = run(&sc, &only)?;
    exec::set_mode(Mode::Sequential);
    let b = run(&sc, &only)?;
    exec::set_mode(Mode::Parallel);
    let same = a.to_json() == b.to_json() && a.to_csv() == b.to_csv();
    Ok(Outcome { pass: same, detail: format!("{} rows, json {} bytes", a.residuals.len(), a.to_json().len()) })
}

fn main() {
    type Check = fn() -> Result<Outcome, String>;
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: [(&str, Check, Duration); 10] = [
        ("algebra floor 16x16", c1, Duration::from_secs(5)),
        ("CAR 50 pairs", c2, Duration::from_secs(30)),
        ("Hadamard, vacuum and transported", c3, min(10)),
        ("tau isomorphism 20 pairs", c4, min(10)),
        ("T-product axioms", c5, min(10)),
        ("tree-level D1, U1 and SU2 24x24", c6, min(5)),
        ("convergence Nx 8/16/24", c7, min(20)),
        ("Ward identity, U1 and SU2", c8, min(10)),
        ("polarization vs loop oracle 8x8", c9, min(10)),
        ("reports identical across worker modes", c10, min(10)),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let out = check();
        let dt = t0.elapsed();
        let o = match out {
            Ok(o) => within(o, dt, *budget),
            Err(e) => Outcome { pass: false, detail: format!("error: {e}") },
        };
        if !o.pass {
            failures += 1;
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name} [{:.1}s] {}", i + 1, dt.as_secs_f64(), o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
