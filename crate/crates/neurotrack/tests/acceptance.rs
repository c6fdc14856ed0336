//! Acceptance criteria 1–11, one PASS/FAIL line each.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use neurotrack::formats::load_rows;
use neurotrack::runner::{self, ObjectDelta, RunResult};
use neurotrack::{BackendChoice, RunConfig, SceneRef};
use neurotrack_core::detector::Detector;
use neurotrack_core::dvs::{emulate_step, init_reference, DvsConfig};
use neurotrack_core::emsif::{
    h_jacobian, h_measure, pseudo_inverse, sif_correction, update, FilterConfig, FilterState, GainRule,
};
use neurotrack_core::lif::{lif_rate, lif_step, LifParams, LifPopulation};
use neurotrack_core::math::PI;
use neurotrack_core::scene::{ground_truth, render_frame, DiskScene, Frame};
use neurotrack_core::snn_emsif::{EmbeddingSpec, DIM};

const THETA_BOUND: f64 = 0.05;
const OMEGA_BOUND: f64 = 0.01;
const R_BOUND: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(cfg: RunConfig, data: Option<&Path>, out: &Path) -> (RunResult, Duration) {
    let resolved = cfg.resolve(Path::new(".")).expect("valid config");
    let start = Instant::now();
    let result = runner::run(&resolved, data, out).expect("run succeeds");
    (result, start.elapsed())
}

fn config(seed: u64, backend: BackendChoice, validator: bool) -> RunConfig {
    let mut cfg = RunConfig::with_seed(seed);
    cfg.backend = backend;
    cfg.validator.enabled = validator;
    cfg
}

fn deltas_within(deltas: &[ObjectDelta], scale: f64) -> bool {
    deltas.len() == 3 && deltas.iter().all(|d| d.within(scale * THETA_BOUND, scale * OMEGA_BOUND, scale * R_BOUND))
}

fn fmt_deltas(deltas: &[ObjectDelta]) -> String {
    deltas
        .iter()
        .map(|d| format!("#{} θ {:.4} ω {:.4} r {:.3}", d.label, d.theta_rms, d.omega_rms, d.r_rms))
        .collect::<Vec<_>>()
        .join("; ")
}

struct Shared {
    dense_dir: tempfile::TempDir,
    dense: RunResult,
    dense_time: Duration,
}

fn dense_default() -> Shared {
    let dir = tempfile::tempdir().unwrap();
    runner::synth(&DiskScene::default(), &dir.path().join("data")).unwrap();
    let data = dir.path().join("data");
    let (dense, dense_time) = run(config(0, BackendChoice::Dense, false), Some(&data), &dir.path().join("out"));
    Shared { dense_dir: dir, dense, dense_time }
}

fn criterion_1(s: &Shared) -> Outcome {
    let summary = &s.dense.runs[0].summary;
    let rows: Vec<(usize, u32, u32, f64, f64)> = load_rows(&s.dense_dir.path().join("out/omega.csv")).unwrap();
    let mut parts = Vec::new();
    let mut pass = summary.objects.len() == 3 && s.dense_time <= Duration::from_secs(60);
    for o in &summary.objects {
        let err = o.mean_abs_omega_error.unwrap_or(f64::INFINITY);
        let window: Vec<f64> = rows.iter().filter(|r| r.1 == o.label && (100..200).contains(&r.0)).map(|r| r.3).collect();
        let (above, below) = (window.iter().filter(|&&w| w > 0.05).count(), window.iter().filter(|&&w| w < 0.05).count());
        pass &= err <= 0.005 && above > 0 && below > 0;
        parts.push(format!("#{} mean|ω̂−0.05| {err:.5} ({above} above/{below} below)", o.label));
    }
    outcome(pass, format!("{}; runtime {:.1}s", parts.join(", "), s.dense_time.as_secs_f64()))
}

fn criterion_2(s: &Shared) -> Outcome {
    let summary = &s.dense.runs[0].summary;
    let errors: Vec<(usize, u32, u32, f64)> = load_rows(&s.dense_dir.path().join("out/errors.csv")).unwrap();
    let omega: Vec<(usize, u32, u32, f64, f64)> = load_rows(&s.dense_dir.path().join("out/omega.csv")).unwrap();
    let mut parts = Vec::new();
    let mut pass = summary.objects.len() == 3;
    for o in &summary.objects {
        let series: Vec<f64> = errors.iter().filter(|r| r.1 == o.label).map(|r| r.3).collect();
        let early = series.iter().take(5).cloned().fold(0.0, f64::max);
        let late = o.mean_error.unwrap_or(f64::INFINITY);
        let omega_at_birth = omega.iter().find(|r| r.1 == o.label).map_or(f64::NAN, |r| r.3);
        pass &= late <= 2.0 && early > late && omega_at_birth == 0.0;
        parts.push(format!("#{} birth peak {early:.2} px → mean[150,200) {late:.3} px, ω̂₀ {omega_at_birth}", o.label));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (res, t) = run(config(0, BackendChoice::Both, false), None, dir.path());
    let deltas = res.comparison.unwrap_or_default();
    let neurons = RunConfig::with_seed(0).pipeline.tracker.neural.neurons;
    let pass = neurons == 800 && deltas_within(&deltas, 1.0) && t <= Duration::from_secs(600);
    outcome(pass, format!("n={neurons}: {}; runtime {:.1}s", fmt_deltas(&deltas), t.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let params = LifParams::default();
    let gap = params.v_th - params.v_reset;
    let mut parts = Vec::new();
    let mut pass = params.dt == 0.001;
    for ratio in [1.5, 2.0, 4.0] {
        let j = ratio * gap;
        let mut pop = LifPopulation::new(1, 0.02);
        let steps = 20_000;
        let mut spikes = 0usize;
        for _ in 0..steps {
            spikes += lif_step(&mut pop, &params, &[j]).unwrap().count();
        }
        let simulated = spikes as f64 / (steps as f64 * params.dt);
        let analytic = lif_rate(j, &params);
        let rel = (simulated - analytic).abs() / analytic;
        pass &= rel <= 0.05;
        parts.push(format!("J/gap {ratio}: {simulated:.1} Hz vs {analytic:.1} Hz ({:.2}%)", 100.0 * rel));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let cfg = DvsConfig::default();
    let base = 0.3;
    let f0 = Frame::uniform(32, 32, 0, base);
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1usize, 2, 5] {
        for sign in [1.0, -1.0] {
            let log = (base + cfg.eps).ln() + sign * (k as f64 * cfg.contrast_threshold + 1e-9);
            let value = log.exp() - cfg.eps;
            let mut f1 = f0.clone();
            f1.index = 1;
            f1.data[7 * 32 + 5] = value;
            let mut state = init_reference(&f0, &cfg).unwrap();
            let ev = emulate_step(&mut state, &f1, 1).unwrap();
            let ok = ev.len() == k && ev.iter().all(|e| (e.x, e.y) == (5, 7) && f64::from(e.polarity) == sign);
            pass &= ok;
            parts.push(format!("{}{k}C→{}", if sign > 0.0 { "+" } else { "−" }, ev.len()));
        }
    }
    let frame = render_frame(&DiskScene::default(), 0).unwrap();
    let mut state = init_reference(&frame, &cfg).unwrap();
    let silent = emulate_step(&mut state, &frame, 1).unwrap().len();
    pass &= silent == 0;
    outcome(pass, format!("{}; identical frames → {silent} events", parts.join(" ")))
}

fn random_prior(rng: &mut impl Rng) -> FilterState {
    let s = DVector::from_column_slice(&[rng.random_range(-PI..PI), rng.random_range(-0.2..0.2), rng.random_range(5.0..60.0)]);
    let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
    let p = &a * a.transpose() + DMatrix::identity(3, 3) * 0.01;
    FilterState { s, p, frame: 0, innovation: [0.0; 2], degenerate: false }
}

fn criterion_6() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(6);
    let mut worst_sat = 0.0f64;
    let mut sat_ok = true;
    let mut zero_ok = true;
    let mut worst_full = 0.0f64;
    for rule in [GainRule::CovarianceWeighted, GainRule::PseudoInverse] {
        let cfg = FilterConfig { gain_rule: rule, ..FilterConfig::default() };
        for _ in 0..500 {
            let prior = random_prior(&mut rng);
            let hz = h_measure(&cfg, &prior.s);
            let z = [hz[0] + rng.random_range(-5.0..5.0), hz[1] + rng.random_range(-5.0..5.0)];
            let (_, info) = update(&cfg, &prior, z);
            sat_ok &= info.saturation.iter().all(|v| (0.0..=1.0).contains(v));
            worst_sat = worst_sat.max(info.saturation[0]).max(info.saturation[1]);

            let (post, _) = update(&cfg, &prior, hz);
            zero_ok &= post.s == prior.s;

            let far = [hz[0] + 50.0 * rng.random_range(-1.0f64..1.0).signum(), hz[1] - 50.0];
            let c = sif_correction(&cfg, &prior.s, &prior.p, far);
            if c.info.saturation == [1.0, 1.0] {
                let h = h_jacobian(&cfg, &prior.s);
                let moved = &h * &c.delta_s;
                let resid = ((moved[0] - c.info.innovation[0]).powi(2) + (moved[1] - c.info.innovation[1]).powi(2)).sqrt();
                worst_full = worst_full.max(resid);
            }
        }
    }
    let mut worst_penrose = 0.0f64;
    for _ in 0..100 {
        let h = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-2.0..2.0));
        let (m, _) = pseudo_inverse(&h);
        let hm = &h * &m;
        let mh = &m * &h;
        for e in [(&hm * &h - &h).amax(), (&mh * &m - &m).amax(), (&hm - hm.transpose()).amax(), (&mh - mh.transpose()).amax()] {
            worst_penrose = worst_penrose.max(e);
        }
    }
    let pass = sat_ok && zero_ok && worst_full <= 1e-9 && worst_penrose <= 1e-9;
    outcome(
        pass,
        format!(
            "saturation in [0,1]: {sat_ok} (max {worst_sat}); z̃=0 unchanged: {zero_ok}; saturated residual {worst_full:.1e}; Penrose max {worst_penrose:.1e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let step = 1e-6;
    let mut worst_h = 0.0f64;
    let lagged = FilterConfig { measurement_lag: 0.5, ..FilterConfig::default() };
    for cfg in [FilterConfig::default(), lagged] {
        for _ in 0..100 {
            let s = DVector::from_column_slice(&[rng.random_range(-PI..PI), rng.random_range(-0.2..0.2), rng.random_range(5.0..60.0)]);
            let h = h_jacobian(&cfg, &s);
            for j in 0..3 {
                let (mut up, mut dn) = (s.clone(), s.clone());
                up[j] += step;
                dn[j] -= step;
                let (a, b) = (h_measure(&cfg, &up), h_measure(&cfg, &dn));
                for i in 0..2 {
                    let fd = (a[i] - b[i]) / (2.0 * step);
                    worst_h = worst_h.max((fd - h[(i, j)]).abs() / h[(i, j)].abs().max(1.0));
                }
            }
        }
    }
    let spec = EmbeddingSpec::default();
    let mut worst_t = 0.0f64;
    for _ in 0..100 {
        let s = [rng.random_range(-PI..PI), rng.random_range(-0.2..0.2), rng.random_range(5.0..70.0)];
        let jt = spec.jacobian(&s);
        for c in 0..3 {
            let (mut up, mut dn) = (s, s);
            up[c] += step;
            dn[c] -= step;
            let (a, b) = (spec.embed(&up), spec.embed(&dn));
            for r in 0..DIM {
                let fd = (a[r] - b[r]) / (2.0 * step);
                worst_t = worst_t.max((fd - jt[(r, c)]).abs() / jt[(r, c)].abs().max(1.0));
            }
        }
    }
    outcome(worst_h <= 1e-6 && worst_t <= 1e-6, format!("h_jacobian max rel err {worst_h:.1e}; embedding J_T {worst_t:.1e}"))
}

fn criterion_8() -> Outcome {
    let scene = DiskScene::default();
    let truth = ground_truth(&scene);
    let dvs = DvsConfig::default();
    let f0 = render_frame(&scene, 0).unwrap();
    let mut cam = init_reference(&f0, &dvs).unwrap();
    let mut det = Detector::new(f0.width, f0.height, Default::default(), dvs.frame_period);
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for k in 1..scene.frame_count {
        let events = emulate_step(&mut cam, &render_frame(&scene, k).unwrap(), k).unwrap();
        let windows = det.process_frame(&events, k).unwrap();
        if k < 2 {
            continue;
        }
        let dets = windows.last().cloned().unwrap_or_default();
        let mut used = Vec::new();
        let ok = dets.len() == 3
            && dets.iter().all(|d| {
                let nearest = truth.frames[k]
                    .iter()
                    .filter(|t| t.visible && !used.contains(&t.label))
                    .map(|t| (t.label, (t.x - d.x).hypot(t.y - d.y)))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match nearest {
                    Some((label, dist)) if dist <= 2.0 => {
                        used.push(label);
                        worst = worst.max(dist);
                        true
                    }
                    _ => false,
                }
            });
        if !ok {
            bad.push(k);
        }
    }
    outcome(bad.is_empty(), format!("{} frames checked, failures {:?}, max distance {worst:.2} px", scene.frame_count - 2, bad))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut long = config(0, BackendChoice::Dense, false);
    long.scene = SceneRef::Inline(DiskScene { frame_count: 252, ..DiskScene::default() });
    let (res, _) = run(long, None, &dir.path().join("long"));
    let swaps = res.runs[0].summary.identity_swaps;
    let bound = res.runs[0].summary.tracks.len();

    let mut intr = config(0, BackendChoice::Dense, true);
    let scene = DiskScene::with_intruder();
    let intruder = scene.objects.iter().find(|o| !o.is_orbiting()).map(|o| o.label).unwrap();
    intr.scene = SceneRef::Inline(scene);
    let (res, _) = run(intr, None, &dir.path().join("intruder"));
    let verdicts = &res.runs[0].summary.verdicts;
    let fourth: Vec<_> = verdicts.iter().filter(|v| v.label == Some(intruder)).collect();
    let ratio = fourth.first().map_or(0.0, |v| v.unmodeled_frames as f64 / v.confirmed_frames.max(1) as f64);
    let others_modeled = verdicts.iter().filter(|v| v.label != Some(intruder)).all(|v| v.majority != "unmodeled");
    let pass = swaps == 0 && bound == 3 && fourth.len() == 1 && ratio >= 0.8 && verdicts.len() == 4 && others_modeled;
    outcome(
        pass,
        format!(
            "252 frames: {swaps} swaps over {bound} tracks; intruder: {} track(s), unmodeled in {:.0}% of confirmed frames; {} tracks total",
            fourth.len(),
            100.0 * ratio,
            verdicts.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(0, BackendChoice::Both, false);
    cfg.pipeline.tracker.silence_fraction = 0.1;
    cfg.pipeline.tracker.silence_after = 100;
    let (res, _) = run(cfg, None, dir.path());
    let deltas = res.comparison.unwrap_or_default();
    let within = deltas_within(&deltas, 2.0);
    outcome(
        deltas.len() == 3,
        format!(
            "report-only, 10% silenced after frame 100: {} ({} 2× bounds)",
            fmt_deltas(&deltas),
            if within { "within" } else { "outside" }
        ),
    )
}

fn read_all(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| fs::read(dir.join(n)).unwrap_or_default()).collect()
}

fn criterion_11(s: &Shared) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csvs = ["tracks.csv", "omega.csv", "errors.csv", "trajectories.csv", "detections.csv", "spikes.csv"];
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        run(config(0, BackendChoice::Spiking, true), None, &dir.path().join(name));
        outputs.push(read_all(&dir.path().join(name), &csvs));
    }
    let identical = outputs[0] == outputs[1] && outputs[0].iter().all(|b| !b.is_empty());

    let (other, _) = run(config(1, BackendChoice::Both, false), None, &dir.path().join("seed1"));
    let changed = read_all(&dir.path().join("seed1/spiking"), &["tracks.csv"])[0] != outputs[0][0];
    let dense_ok = other.runs[0]
        .summary
        .objects
        .iter()
        .all(|o| o.mean_abs_omega_error.is_some_and(|e| e <= 0.005) && o.mean_error.is_some_and(|e| e <= 2.0));
    let deltas = other.comparison.clone().unwrap_or_default();
    let seed0_dense = &s.dense.runs[0].summary.objects;
    let pass = identical && changed && dense_ok && deltas_within(&deltas, 1.0) && seed0_dense.len() == 3;
    outcome(
        pass,
        format!(
            "same seed byte-identical: {identical}; seed 1 changes spiking tracks: {changed}; seed 1 dense bounds: {dense_ok}; seed 1 deltas {}",
            fmt_deltas(&deltas)
        ),
    )
}

fn main() {
    let names = [
        "angular-velocity recovery",
        "position-error transient",
        "spiking/dense equivalence",
        "LIF analytic rate",
        "DVS exactness",
        "SIF properties",
        "Jacobian checks",
        "detector fidelity",
        "tracker identity",
        "neuron-silencing robustness",
        "determinism",
    ];
    let shared = dense_default();
    let mut failed = 0;
    for (i, name) in names.iter().enumerate() {
        let start = Instant::now();
        let o = match i + 1 {
            1 => criterion_1(&shared),
            2 => criterion_2(&shared),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            10 => criterion_10(),
            _ => criterion_11(&shared),
        };
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
