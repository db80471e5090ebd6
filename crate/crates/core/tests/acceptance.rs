//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the output.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use alienlab::agents::{
    sample_population, Agent, AgentKind, AgentSpec, ExchangePhase, ExtraEntry, HillClimbAgent, LlmAgent, LlmSetup,
    Observable, PopulationEntry, PopulationMix,
};
use alienlab::annotate::{annotate, ClassifyMode, Lexicon, SegmentLabel};
use alienlab::experiment::{self, AnalyzeOptions, ExperimentConfig};
use alienlab::game::{GameState, Objective, RunRecord, RunStatus};
use alienlab::landscape::{hamming, symbol_names, Configuration, Landscape};
use alienlab::llm_client::{
    parse_configuration, ChatProvider, Limiter, LlmClient, ProviderConfig, ProviderKind, ScriptedProvider,
};
use alienlab::rng;
use alienlab::stats::{inverse_mills, norm_cdf, ols_fit, probit_fit, two_step};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn standard_normal(r: &mut rng::Rng) -> f64 {
    let u1: f64 = 1.0 - r.gen::<f64>();
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn nk_structure() -> Outcome {
    let t0 = Instant::now();
    let mut means = Vec::new();
    for k in [0, 5, 9] {
        let mut total = 0usize;
        for seed in 0..100 {
            let l = Landscape::generate(10, k, seed).map_err(|e| e.to_string())?;
            let count = l.enumerate_optima().map_err(|e| e.to_string())?.local_optima.len();
            if k == 0 {
                ensure(count == 1, || format!("K=0 seed {seed} has {count} local optima"))?;
            }
            total += count;
        }
        means.push(total as f64 / 100.0);
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(means[0] < means[1] && means[1] < means[2], || format!("means not increasing: {means:?}"))?;
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("mean local optima K=0/5/9: {:.2}/{:.2}/{:.2}, {secs:.2} s", means[0], means[1], means[2]))
}

fn hill_climb_completeness() -> Outcome {
    let mut worst = 0;
    for seed in 0..10 {
        let l = Landscape::generate(10, 0, seed).unwrap();
        let spec = AgentSpec::scripted(AgentKind::HillClimb, seed);
        for start in 0..1024 {
            let mut g = GameState::with_start(&l, Configuration::from_index(start, 10), 24).unwrap();
            let mut agent = HillClimbAgent::new(&spec);
            let mut best = g.start_payoff();
            let mut improving = 0;
            while !g.is_closed() && best < 100.0 {
                let a = agent.next_move(&Observable::of(&g, Objective::Wealth)).unwrap();
                let fb = g.submit(a.config, a.raw_text).unwrap();
                if fb.payoff > best {
                    best = fb.payoff;
                    improving += 1;
                }
            }
            ensure(best == 100.0, || format!("seed {seed} start {start} ends at {best}"))?;
            ensure(improving <= 10, || format!("seed {seed} start {start} needed {improving} improvements"))?;
            worst = worst.max(improving);
        }
    }
    Ok(format!("10 landscapes x 1024 starts all reach 100, at most {worst} improving trials"))
}

/// Independent recomputation from payoffs and bit indices.
fn oracle_fields(run: &RunRecord) -> (Vec<usize>, Vec<bool>, Option<usize>) {
    let mut best_idx = run.start_config.index();
    let mut best_pay = run.start_payoff;
    let mut distances = Vec::new();
    for t in &run.trials {
        distances.push((t.config.index() ^ best_idx).count_ones() as usize);
        if t.payoff > best_pay {
            best_pay = t.payoff;
            best_idx = t.config.index();
        }
    }
    let active: Vec<bool> = distances.iter().map(|&d| d > 0).collect();
    let tail = active.iter().rev().take_while(|a| !**a).count();
    let stop = (tail > 0).then(|| active.len() - tail + 1);
    (distances, active, stop)
}

fn metric_oracle() -> Outcome {
    let mut r = rng::seeded(2024);
    for _ in 0..1000 {
        let (a, b) = (r.gen_range(0..1024usize), r.gen_range(0..1024usize));
        let bitwise = (0..10).filter(|i| (a >> i) & 1 != (b >> i) & 1).count();
        let h = hamming(&Configuration::from_index(a, 10), &Configuration::from_index(b, 10)).unwrap();
        ensure(h == bitwise, || format!("hamming({a}, {b}) = {h}, oracle {bitwise}"))?;
    }
    let l = Landscape::generate(10, 5, 31).unwrap();
    for run_no in 0..50u64 {
        let mut g = GameState::new(&l, run_no, 24).unwrap();
        let mut seen = vec![g.start_config().clone()];
        for t in 0..24 {
            // revisits and a resubmission tail produce inactive trials
            let c = if t >= 18 && run_no % 2 == 0 {
                let mut best = (g.start_config(), g.start_payoff());
                for x in g.history() {
                    if x.payoff > best.1 {
                        best = (&x.config, x.payoff);
                    }
                }
                best.0.clone()
            } else if r.gen_bool(0.3) {
                seen[r.gen_range(0..seen.len())].clone()
            } else {
                Configuration::from_index(r.gen_range(0..1024), 10)
            };
            seen.push(c.clone());
            g.submit(c, String::new()).unwrap();
        }
        let run = g.into_record(format!("r{run_no}"), "x".into(), "x".into(), Objective::Wealth, RunStatus::Complete);
        let (d, a, stop) = oracle_fields(&run);
        for t in 1..=24 {
            let rec = &run.trials[t - 1];
            ensure(run.search_distance(t).unwrap() == d[t - 1] && rec.distance == d[t - 1], || {
                format!("run {run_no} trial {t}: distance")
            })?;
            ensure(run.is_active(t).unwrap() == a[t - 1] && rec.active == a[t - 1], || format!("run {run_no} trial {t}: active"))?;
        }
        let got = run.stop_trial().unwrap();
        ensure(got == stop, || format!("run {run_no}: stop_trial {got:?}, oracle {stop:?}"))?;
    }
    Ok("1000 hamming pairs and 50 runs x 24 trials agree with the oracle".into())
}

fn probit_recovery() -> Outcome {
    let t0 = Instant::now();
    let n = 10_000;
    let truth = [0.2, 1.0, -0.5];
    let mut r = rng::seeded(20_240_101);
    let mut x = DMatrix::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (standard_normal(&mut r), standard_normal(&mut r));
        x[(i, 0)] = 1.0;
        x[(i, 1)] = a;
        x[(i, 2)] = b;
        y.push(truth[0] + truth[1] * a + truth[2] * b + standard_normal(&mut r) > 0.0);
    }
    let names: Vec<String> = ["intercept", "x1", "x2"].iter().map(|s| s.to_string()).collect();
    let fit = probit_fit(&x, &y, &names).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    for j in 0..3 {
        let z = (fit.coefficients[j] - truth[j]) / fit.std_errors[j];
        ensure(z.abs() < 3.0, || format!("{} off by {z:.2} SE", names[j]))?;
    }
    ensure(fit.gradient_max < 1e-8, || format!("gradient {:e}", fit.gradient_max))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("beta = {:.3?}, gradient {:.1e}, {secs:.2} s", fit.coefficients, fit.gradient_max))
}

struct Selection {
    x1: DMatrix<f64>,
    selected: Vec<bool>,
    x2: DMatrix<f64>,
    y2: Vec<f64>,
}

/// Selection z* = 0.2 + w + 0.8x + u, outcome y = 1 + 2x + e with
/// corr(u, e) = rho; `w` is excluded from the outcome equation.
fn selection_data(rho: f64, seed: u64) -> Selection {
    let n = 20_000;
    let mut r = rng::seeded(seed);
    let mut x1 = DMatrix::zeros(n, 3);
    let mut selected = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..n {
        let w = standard_normal(&mut r);
        let x = r.gen_range(-1.5..1.5);
        let u = standard_normal(&mut r);
        let e = rho * u + (1.0 - rho * rho).sqrt() * standard_normal(&mut r);
        x1[(i, 0)] = w;
        x1[(i, 1)] = x;
        x1[(i, 2)] = 1.0;
        let s = 0.2 + w + 0.8 * x + u > 0.0;
        selected.push(s);
        if s {
            xs.push(x);
            ys.push(1.0 + 2.0 * x + e);
        }
    }
    let x2 = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { xs[i] } else { 1.0 });
    Selection { x1, selected, x2, y2: ys }
}

fn heckman_validity() -> Outcome {
    let n1: Vec<String> = ["w", "x", "intercept"].iter().map(|s| s.to_string()).collect();
    let n2: Vec<String> = ["x", "intercept"].iter().map(|s| s.to_string()).collect();
    let d = selection_data(0.5, 77);
    let (_, s2) = two_step(&d.x1, &d.selected, &n1, &d.x2, &d.y2, &n2).map_err(|e| e.to_string())?;
    let naive = ols_fit(&d.x2, &DVector::from_vec(d.y2.clone()), &n2).map_err(|e| e.to_string())?;
    let (slope, se) = (s2.coefficients[0], s2.std_errors[0]);
    let naive_bias = naive.coefficients[0] - 2.0;
    ensure((slope - 2.0).abs() < 3.0 * se, || format!("slope {slope:.4} (SE {se:.4})"))?;
    ensure((slope - 2.0).abs() < naive_bias.abs(), || format!("bias {:.4} not below naive {naive_bias:.4}", slope - 2.0))?;
    let d = selection_data(0.0, 78);
    let (_, s0) = two_step(&d.x1, &d.selected, &n1, &d.x2, &d.y2, &n2).map_err(|e| e.to_string())?;
    let mills = s0.names.iter().position(|n| n == "inverse_mills").ok_or("no Mills column")?;
    let z = s0.z_values[mills];
    ensure(z.abs() < 3.0, || format!("Mills z = {z:.2} at rho = 0"))?;
    Ok(format!("slope {slope:.4} (SE {se:.4}), naive bias {naive_bias:.4}; Mills z at rho 0 = {z:.2}"))
}

fn special_values() -> Outcome {
    // Φ(1.959964) to 25 digits, from arbitrary-precision arithmetic
    const ORACLE: f64 = 0.975_000_000_903_557_598_005_615_5;
    ensure(norm_cdf(0.0) == 0.5, || format!("norm_cdf(0) = {}", norm_cdf(0.0)))?;
    let m = inverse_mills(0.0);
    ensure((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12, || format!("inverse_mills(0) = {m}"))?;
    let c = norm_cdf(1.959964);
    ensure((c - ORACLE).abs() < 1e-15, || format!("norm_cdf(1.959964) = {c:.17}, oracle {ORACLE:.17}"))?;
    ensure((c - 0.975).abs() < 1e-6, || format!("norm_cdf(1.959964) - 0.975 = {:e}", c - 0.975))?;
    Ok(format!("norm_cdf(0) = 0.5, inverse_mills(0) = {m:.15}, norm_cdf(1.959964) = {c:.16}"))
}

fn experiment_config(name: &str, count: usize, extras: &str) -> String {
    format!(
        "schema_version = 1\nname = \"{name}\"\nmaster_seed = 99\nthink_aloud = true\n\n\
         [landscape]\nn = 10\nk = [0, 5, 9]\nseed = 2024\n\n\
         [population.base]\ncount = {count}\ntemplate = {{ kind = \"llm\", model_label = \"sim\" }}\n\n\
         {extras}\n\
         [providers.sim]\nkind = \"mock\"\nmock_seed = 5\n"
    )
}

fn row_accounting() -> Outcome {
    let mut cfg = ExperimentConfig::parse(&experiment_config("rows", 300, "")).map_err(|e| e.to_string())?;
    cfg.parallelism = 8;
    let dir = tempfile::tempdir().unwrap();
    let s = experiment::run_experiment(&cfg, dir.path()).map_err(|e| e.to_string())?;
    ensure(s.committed == 900 && s.aborted.is_empty(), || format!("{} committed, {} aborted", s.committed, s.aborted.len()))?;
    experiment::annotate_store(dir.path(), None).map_err(|e| e.to_string())?;
    let r = experiment::analyze(dir.path(), &AnalyzeOptions::default()).map_err(|e| e.to_string())?;
    let rows_file = std::fs::read_to_string(r.out_dir.join(experiment::ROWS_FILE)).unwrap();
    let data_lines = rows_file.lines().filter(|l| !l.starts_with('#')).count() - 1;
    ensure(r.rows == 21_600 && data_lines == 21_600, || format!("{} rows, {data_lines} data lines", r.rows))?;
    let stage2 = r.stage2_rows.ok_or_else(|| format!("two-step failed: {:?}", r.heckman_error))?;
    ensure(stage2 == r.active_rows, || format!("stage 2 has {stage2} rows, {} active", r.active_rows))?;
    Ok(format!("900 mock runs -> {} rows, stage 2 = {stage2} active rows", r.rows))
}

fn population_mixing() -> Outcome {
    let mix = PopulationMix {
        base: PopulationEntry { template: AgentSpec::llm("model-a", 0), count: 69 },
        extras: vec![ExtraEntry { template: AgentSpec::llm("model-b", 0), fraction: 0.20 }],
    };
    let agents = sample_population(&mix, 1).map_err(|e| e.to_string())?;
    let extra = agents.iter().filter(|a| a.model_label == "model-b").count();
    ensure(agents.len() == 83 && extra == 14, || format!("{} agents, {extra} extra", agents.len()))?;
    Ok("69 + 20% -> 14 extra, 83 total".into())
}

fn files_of(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn end_to_end_determinism() -> Outcome {
    let extras = "[[population.extras]]\nfraction = 0.34\ntemplate = { kind = \"local_search\" }\n\n\
                  [[population.extras]]\nfraction = 0.34\ntemplate = { kind = \"hill_climb\" }\n";
    let cfg = ExperimentConfig::parse(&experiment_config("det", 6, extras)).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for parallelism in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg.clone();
        c.parallelism = parallelism;
        let s = experiment::run_experiment(&c, dir.path()).map_err(|e| e.to_string())?;
        ensure(s.committed == 30, || format!("{} runs", s.committed))?;
        experiment::annotate_store(dir.path(), None).map_err(|e| e.to_string())?;
        let r = experiment::analyze(dir.path(), &AnalyzeOptions::default()).map_err(|e| e.to_string())?;
        let figures = dir.path().join("figures");
        alienlab::plot::plot_dir(&r.out_dir, &figures).map_err(|e| e.to_string())?;
        let digest = experiment::store_digest(dir.path()).map_err(|e| e.to_string())?;
        outputs.push((digest, files_of(&r.out_dir), files_of(&figures), dir));
    }
    ensure(outputs[0].0 == outputs[1].0, || "run stores differ".into())?;
    ensure(outputs[0].1 == outputs[1].1, || "analysis tables differ".into())?;
    ensure(outputs[0].2 == outputs[1].2, || "SVGs differ".into())?;
    Ok(format!(
        "10 agents x K in {{0,5,9}}, serial vs 4 workers: store, {} tables, {} SVGs identical",
        outputs[0].1.len(),
        outputs[0].2.len()
    ))
}

fn parsing_robustness() -> Outcome {
    let symbols = symbol_names(10);
    let mut r = rng::seeded(404);
    let fragments = ["alpha", "beta: on", "GAMMA = off", ":", "\n", "on", "off", " ", "(α)", "->", "1", "é", "\u{0}", "kappa"];
    let (mut crashes, mut parsed) = (0, 0);
    for i in 0..10_000 {
        let text = if i % 2 == 0 {
            let len = r.gen_range(0..400);
            let bytes: Vec<u8> = (0..len).map(|_| r.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        } else {
            (0..r.gen_range(0..60)).map(|_| fragments[r.gen_range(0..fragments.len())]).collect()
        };
        match std::panic::catch_unwind(|| parse_configuration(&text, &symbols)) {
            Ok(Ok(_)) => parsed += 1,
            Ok(Err(_)) => {}
            Err(_) => crashes += 1,
        }
    }
    ensure(crashes == 0, || format!("{crashes} crashes"))?;

    let valid: String =
        symbols.iter().enumerate().map(|(i, s)| format!("{s}: {}\n", if i % 3 == 0 { "on" } else { "off" })).collect();
    let provider = Arc::new(ScriptedProvider::new(["I like turtles.", "alpha: on, beta: off", valid.as_str()]));
    let client = LlmClient::new(provider.clone() as Arc<dyn ChatProvider>, Arc::new(Limiter::new(1)));
    let cfg = ProviderConfig { kind: ProviderKind::Mock, ..Default::default() };
    let setup = LlmSetup { framing: Default::default(), think_aloud: true, objective: Objective::Wealth, trials: 24, n: 10 };
    let mut agent = LlmAgent::new(&AgentSpec::llm("m", 1), client, cfg, &setup);
    let l = Landscape::generate(10, 5, 1).unwrap();
    let g = GameState::new(&l, 1, 24).unwrap();
    let action = agent.next_move(&Observable::of(&g, Objective::Wealth)).map_err(|e| e.to_string())?;
    let phases: Vec<ExchangePhase> = agent.take_exchanges().iter().map(|e| e.phase).collect();
    ensure(phases == [ExchangePhase::Trial, ExchangePhase::Reprompt, ExchangePhase::Reprompt], || format!("phases {phases:?}"))?;
    ensure(action.config.to_string() == "1001001001", || format!("parsed {}", action.config))?;
    let reminders = provider
        .requests()
        .iter()
        .filter(|q| q.messages.last().is_some_and(|m| m.content.contains("exactly once")))
        .count();
    ensure(reminders == 2, || format!("{reminders} format reminders sent"))?;
    Ok(format!("10,000 fuzz cases, 0 crashes ({parsed} parsed); two format failures then success"))
}

#[derive(serde::Deserialize)]
struct Corpus {
    snippet: Vec<Snippet>,
}

#[derive(serde::Deserialize)]
struct Snippet {
    text: String,
    labels: Vec<SegmentLabel>,
    breadth: usize,
}

fn annotation_fidelity() -> Outcome {
    let corpus: Corpus = toml::from_str(include_str!("../fixtures/annotation_corpus.toml")).map_err(|e| e.to_string())?;
    ensure(corpus.snippet.len() == 30, || format!("{} snippets", corpus.snippet.len()))?;
    let lexicon = Lexicon::default();
    let symbols = symbol_names(10);
    let (mut agree, mut total) = (0, 0);
    for (i, s) in corpus.snippet.iter().enumerate() {
        let a = annotate("fixture", i + 1, &s.text, &symbols, &ClassifyMode::Heuristic, &lexicon);
        ensure(a.segments.len() == s.labels.len(), || {
            format!("snippet {}: {} sentences, {} labels", i + 1, a.segments.len(), s.labels.len())
        })?;
        ensure(a.breadth == s.breadth, || format!("snippet {}: breadth {} vs {}", i + 1, a.breadth, s.breadth))?;
        agree += a.segments.iter().zip(&s.labels).filter(|(g, l)| g.label == **l).count();
        total += s.labels.len();
    }
    let rate = agree as f64 / total as f64;
    ensure(rate >= 0.9, || format!("agreement {agree}/{total} = {rate:.3}"))?;
    Ok(format!("sentence agreement {agree}/{total} = {:.1}%, breadth exact on 30 snippets", 100.0 * rate))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("NK structure", nk_structure),
        ("hill-climb completeness", hill_climb_completeness),
        ("metric oracle", metric_oracle),
        ("probit recovery", probit_recovery),
        ("two-step validity", heckman_validity),
        ("special values", special_values),
        ("row accounting", row_accounting),
        ("population mixing", population_mixing),
        ("end-to-end determinism", end_to_end_determinism),
        ("parsing robustness", parsing_robustness),
        ("annotation fidelity", annotation_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("criterion 12 not evaluated: reference-only, needs live provider credentials");
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
