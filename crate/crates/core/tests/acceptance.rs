//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod support;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sipmatch::arm::TaskSpec;
use sipmatch::bench::{bench_report, BenchSpec};
use sipmatch::config::EngineConfig;
use sipmatch::controller::InterfaceKind;
use sipmatch::matcher::{MatchOutcome, Matcher, ResetReason, SequenceLibrary, UserDefinedSequence};
use sipmatch::mode::ControlMode;
use sipmatch::replay::{load_recording, replay, synthesize, write_recording};
use sipmatch::signal::{detect_all, Code, DetectorConfig, Sample};
use sipmatch::sim::VirtualUserModel;
use sipmatch::stats::{wilcoxon_signed_rank, Alternative};
use support::{all_words, code, wilcoxon_by_enumeration, Outcome, RefMatcher, ALPHABET};

struct Verdict {
    ok: bool,
    detail: String,
}

fn check(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let ok = v.ok && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" (limit {:.0?})", l));
    println!(
        "[{}] {name}: {}; {:.2?}{budget}",
        if ok { "PASS" } else { "FAIL" },
        v.detail,
        elapsed
    );
    ok
}

fn library(entries: &[(&str, Vec<i64>)], t_match_ms: u64) -> Arc<SequenceLibrary> {
    let seqs = entries
        .iter()
        .map(|(id, codes)| {
            UserDefinedSequence::new(*id, codes.iter().map(|&c| code(c)).collect(), ControlMode::TranslateFb)
        })
        .collect();
    Arc::new(SequenceLibrary::new(seqs, t_match_ms).unwrap())
}

fn walkthrough() -> Verdict {
    let lib = library(&[("S1", vec![1, 2, -1]), ("S2", vec![1, 2]), ("S3", vec![2, 1])], 1500);
    let pending = |ids: &[&str]| MatchOutcome::Pending {
        candidates: ids.iter().map(|s| s.to_string()).collect(),
    };
    let mut failures = Vec::new();
    let mut expect = |case: &str, got: MatchOutcome, want: MatchOutcome| {
        if got != want {
            failures.push(format!("{case}: got {got:?}"));
        }
    };

    let mut m = Matcher::new(lib.clone());
    expect("<2>", m.push(Code::LongSip, 0).unwrap(), pending(&["S3"]));

    let mut m = Matcher::new(lib.clone());
    m.push(Code::ShortSip, 0).unwrap();
    expect("<1,2>", m.push(Code::LongSip, 500).unwrap(), pending(&["S1", "S2"]));

    let mut m = Matcher::new(lib.clone());
    m.push(Code::ShortSip, 0).unwrap();
    m.push(Code::LongSip, 500).unwrap();
    let got = m.push(Code::ShortPuff, 900).unwrap();
    expect("<1,2,-1>", got.clone(), MatchOutcome::Matched { id: "S1".into(), mode: ControlMode::TranslateFb });

    let mut m = Matcher::new(lib.clone());
    m.push(Code::ShortSip, 0).unwrap();
    m.push(Code::LongSip, 500).unwrap();
    expect("<1,2> before deadline", m.tick(1999).unwrap(), pending(&["S1", "S2"]));
    expect(
        "<1,2> + timeout",
        m.tick(2000).unwrap(),
        MatchOutcome::Matched { id: "S2".into(), mode: ControlMode::TranslateFb },
    );

    let mut m = Matcher::new(lib);
    m.push(Code::ShortSip, 0).unwrap();
    m.push(Code::LongSip, 500).unwrap();
    expect(
        "<1,2> + 2",
        m.push(Code::LongSip, 900).unwrap(),
        MatchOutcome::Reset { reason: ResetReason::NoCandidate },
    );
    let cleared = m.current().is_empty();
    if !cleared {
        failures.push("CS not cleared after reset".into());
    }
    Verdict {
        ok: failures.is_empty(),
        detail: if failures.is_empty() {
            "5 cases exact".into()
        } else {
            failures.join("; ")
        },
    }
}

enum Step {
    Push(i64),
    Tick,
}

/// Runs one schedule through both matchers; `None` when they agree.
fn compare(entries: &[(String, Vec<i64>)], schedule: &[(Step, u64)]) -> Option<String> {
    let t_match = 1500;
    let refs: Vec<(&str, Vec<i64>)> = entries.iter().map(|(id, c)| (id.as_str(), c.clone())).collect();
    let mut m = Matcher::new(library(&refs, t_match));
    let mut r = RefMatcher::new(entries.to_vec(), t_match);
    for (i, (step, t)) in schedule.iter().enumerate() {
        let (got, want) = match step {
            Step::Push(c) => (m.push_raw(*c, *t).unwrap(), r.push(*c, *t)),
            Step::Tick => (m.tick(*t).unwrap(), r.tick(*t)),
        };
        let cs: Vec<i64> = m.current().iter().map(|c| c.value()).collect();
        if Outcome::from(&got) != want || cs != r.current() {
            return Some(format!("library {entries:?}, step {i}: got {got:?}, want {want:?}"));
        }
    }
    None
}

fn oracle_equivalence() -> Verdict {
    let words = all_words(2);
    let mut libraries: Vec<Vec<Vec<i64>>> = vec![vec![]];
    for i in 0..words.len() {
        libraries.push(vec![words[i].clone()]);
        for j in i + 1..words.len() {
            libraries.push(vec![words[i].clone(), words[j].clone()]);
            for k in j + 1..words.len() {
                libraries.push(vec![words[i].clone(), words[j].clone(), words[k].clone()]);
            }
        }
    }
    let mut inputs: Vec<Vec<i64>> = vec![vec![]];
    inputs.extend(all_words(3));

    let mut runs = 0usize;
    let mut mismatches = Vec::new();
    for (li, lib) in libraries.iter().enumerate() {
        // ids in reverse insertion order on odd libraries
        let entries: Vec<(String, Vec<i64>)> = lib
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let n = if li % 2 == 1 { lib.len() - i } else { i + 1 };
                (format!("S{n}"), c.clone())
            })
            .collect();
        for input in &inputs {
            for gap in [100u64, 1499, 1500] {
                let mut schedule = Vec::new();
                let mut t = 0;
                for &c in input {
                    schedule.push((Step::Push(c), t));
                    schedule.push((Step::Tick, t + gap));
                    t += gap;
                }
                schedule.push((Step::Tick, t + 1499));
                schedule.push((Step::Tick, t + 1500));
                runs += 1;
                if let Some(m) = compare(&entries, &schedule) {
                    mismatches.push(m);
                }
            }
        }
    }
    let exhaustive_libraries = libraries.len();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let words3 = all_words(3);
    let random_cases = 5000;
    for _ in 0..random_cases {
        let size = rng.random_range(0..=4);
        let mut lib: Vec<Vec<i64>> = Vec::new();
        while lib.len() < size {
            let w = words3[rng.random_range(0..words3.len())].clone();
            if !lib.contains(&w) {
                lib.push(w);
            }
        }
        let entries: Vec<(String, Vec<i64>)> = lib
            .into_iter()
            .enumerate()
            .map(|(i, c)| (format!("U{}", (i * 7 + 3) % 10), c))
            .collect();
        let steps = rng.random_range(1..=6);
        let mut t = 0;
        let schedule: Vec<(Step, u64)> = (0..steps)
            .map(|_| {
                t += [0, 10, 400, 1499, 1500, 2500][rng.random_range(0..6)];
                if rng.random_bool(0.6) {
                    (Step::Push(ALPHABET[rng.random_range(0..4)]), t)
                } else {
                    (Step::Tick, t)
                }
            })
            .collect();
        runs += 1;
        if let Some(m) = compare(&entries, &schedule) {
            mismatches.push(m);
        }
    }
    Verdict {
        ok: mismatches.is_empty(),
        detail: format!(
            "{exhaustive_libraries} exhaustive libraries + {random_cases} random cases, {runs} schedules, {} mismatches{}",
            mismatches.len(),
            mismatches.first().map_or(String::new(), |m| format!(" (first: {m})"))
        ),
    }
}

fn pulse(v: f64, width_ms: u64) -> Vec<Sample> {
    synthesize(&[(2.5, 200), (v, width_ms), (2.5, 300)])
}

fn detector_boundary() -> Verdict {
    let cfg = DetectorConfig::default();
    let mut failures = Vec::new();
    let lt = cfg.long_threshold_ms;
    for (v, short, long) in [(0.5, Code::ShortSip, Code::LongSip), (4.5, Code::ShortPuff, Code::LongPuff)] {
        for (width, want) in [(lt - 10, short), (lt + 10, long)] {
            let events = detect_all(&cfg, &pulse(v, width)).unwrap();
            let codes: Vec<Code> = events.iter().map(|e| e.code).collect();
            if codes != [want] {
                failures.push(format!("{v} V for {width} ms gave {codes:?}"));
            }
        }
        for width in (10..cfg.debounce_ms).step_by(10) {
            let events = detect_all(&cfg, &pulse(v, width)).unwrap();
            if !events.is_empty() {
                failures.push(format!("{width} ms glitch at {v} V not debounced"));
            }
        }
    }
    // inside the dead band, and swinging across the activation level
    // without falling back through the release level
    let mut chatter = vec![(2.5, 100)];
    for i in 0..60 {
        chatter.push((if i % 2 == 0 { 2.25 } else { 2.75 }, 10));
    }
    let quiet = detect_all(&cfg, &synthesize(&chatter)).unwrap();
    let mut held = vec![(2.5, 100)];
    for i in 0..30 {
        held.push((if i % 2 == 0 { 3.3 } else { 2.9 }, 10));
    }
    held.push((2.5, 200));
    let one = detect_all(&cfg, &synthesize(&held)).unwrap();
    if !quiet.is_empty() {
        failures.push(format!("dead-band chatter produced {} events", quiet.len()));
    }
    if one.len() != 1 || one[0].code != Code::ShortPuff {
        failures.push(format!("threshold chatter produced {one:?}"));
    }
    Verdict {
        ok: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} ms / {} ms split both polarities, sub-{} ms glitches dropped, chatter silent", lt - 10, lt + 10, cfg.debounce_ms)
        } else {
            failures.join("; ")
        },
    }
}

fn traces(path: &Path, config: &EngineConfig, kind: InterfaceKind) -> (String, String, String) {
    let samples = load_recording(path).unwrap();
    let out = replay(&samples, config, kind).unwrap();
    (out.event_trace(), out.match_trace(), out.step_trace())
}

fn determinism() -> Verdict {
    let config = EngineConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let mut files: Vec<_> = std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..20 {
        let mut t = 0;
        let samples: Vec<Sample> = (0..3000)
            .map(|_| {
                t += 10;
                Sample::new(t, rng.random_range(0.0..5.0))
            })
            .collect();
        let path = dir.path().join(format!("random_{i}.csv"));
        std::fs::write(&path, write_recording(&samples)).unwrap();
        files.push(path);
    }
    let mut differing = Vec::new();
    let mut events = 0;
    for path in &files {
        for kind in [InterfaceKind::Asp, InterfaceKind::Bsp] {
            let a = traces(path, &config, kind);
            let b = traces(path, &config, kind);
            events += a.0.lines().count();
            if a != b {
                differing.push(format!("{} ({})", path.display(), kind.as_str()));
            }
        }
    }
    Verdict {
        ok: differing.is_empty() && events > 0,
        detail: format!(
            "{} recordings x 2 interfaces, {events} events, {} differing",
            files.len(),
            differing.len()
        ),
    }
}

fn wilcoxon_exactness() -> Verdict {
    let mut failures = Vec::new();
    let pairs: Vec<(f64, f64)> = (1..=8).map(|i| (0.0, i as f64)).collect();
    let r = wilcoxon_signed_rank(&pairs, Alternative::Less).unwrap();
    if r.p_value != 0.00390625 {
        failures.push(format!("n=8 all negative: p = {}", r.p_value));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    while compared < 500 {
        let n = rng.random_range(1..=10);
        // small integer grid so ties and zeros occur
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0..8) as f64 * 0.5, rng.random_range(0..8) as f64 * 0.5))
            .collect();
        if pairs.iter().all(|(a, b)| a == b) {
            continue;
        }
        compared += 1;
        for (alt, name) in [(Alternative::Less, "less"), (Alternative::Greater, "greater"), (Alternative::TwoSided, "two_sided")] {
            let got = wilcoxon_signed_rank(&pairs, alt).unwrap().p_value;
            let want = wilcoxon_by_enumeration(&pairs, name);
            worst = worst.max((got - want).abs());
        }
    }
    if worst > 1e-12 {
        failures.push(format!("max deviation from enumeration {worst:e}"));
    }
    Verdict {
        ok: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("n=8 p=1/256 exact, {compared} random datasets x 3 alternatives, max deviation {worst:e}")
        } else {
            failures.join("; ")
        },
    }
}

fn benchmark_criteria(results: &mut Vec<bool>) {
    let config = EngineConfig::default();
    let spec = BenchSpec {
        tasks: TaskSpec::shipped_ids().iter().map(|id| TaskSpec::shipped(id).unwrap()).collect(),
        interfaces: vec![InterfaceKind::Asp, InterfaceKind::Bsp],
        model: VirtualUserModel::default(),
        seeds: 30,
        base_seed: 0,
    };
    let mut report = None;
    results.push(check("direction of effect", Some(Duration::from_secs(300)), || {
        let r = bench_report(&spec, &config).unwrap();
        let mut ok = true;
        let mut parts = Vec::new();
        for c in &r.comparisons {
            let rows: Vec<_> = r.rows.iter().filter(|row| row.task == c.task).collect();
            let asp = rows.iter().find(|row| row.interface == InterfaceKind::Asp).unwrap();
            let bsp = rows.iter().find(|row| row.interface == InterfaceKind::Bsp).unwrap();
            let mean_moving = (asp.moving_ms.mean + bsp.moving_ms.mean) / 2.0;
            let centered = c.mean_moving_diff_ms.abs() < 0.1 * mean_moving;
            let faster = asp.completion_ms.mean < bsp.completion_ms.mean;
            let significant = c.completion.p_value < 0.05;
            ok &= faster && significant && centered;
            parts.push(format!(
                "{} {:.1}s vs {:.1}s (-{:.0}%, p={:.1e}, moving diff {:.0} ms of {:.0} ms)",
                c.task,
                asp.completion_ms.mean / 1e3,
                bsp.completion_ms.mean / 1e3,
                c.completion_reduction * 100.0,
                c.completion.p_value,
                c.mean_moving_diff_ms,
                mean_moving
            ));
        }
        report = Some(r);
        Verdict {
            ok,
            detail: parts.join(", "),
        }
    }));
    results.push(check("metrics identity", None, || {
        let r = report.as_ref().unwrap();
        let broken = r
            .sessions
            .iter()
            .filter(|s| s.metrics.wasted_ms + s.metrics.moving_ms != s.metrics.completion_ms)
            .count();
        Verdict {
            ok: broken == 0 && !r.sessions.is_empty(),
            detail: format!("{} sessions, {broken} violations", r.sessions.len()),
        }
    }));
}

fn main() {
    let mut results = vec![
        check("walkthrough", Some(Duration::from_secs(1)), walkthrough),
        check("matcher oracle equivalence", Some(Duration::from_secs(60)), oracle_equivalence),
        check("detector boundary", Some(Duration::from_secs(5)), detector_boundary),
        check("determinism", None, determinism),
        check("wilcoxon exactness", None, wilcoxon_exactness),
    ];
    benchmark_criteria(&mut results);
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
