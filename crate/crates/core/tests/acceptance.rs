//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! cargo test --release --test acceptance

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_diar::array::ArrayGeometry;
use spatial_diar::beam::extract_svectors;
use spatial_diar::cluster::{cosine_matrix, fuse, nme_sc, FusionWeight, SimilarityKind};
use spatial_diar::dmsnet::{detect_overlap, frame_accuracy, frame_posteriors, train_with, DmsNet, TrainOptions, Variant, DEFAULT_THRESHOLD};
use spatial_diar::io::serialize_rttm;
use spatial_diar::pipeline::{Mode, Pipeline, PipelineConfig};
use spatial_diar::scoring::{score_der, score_osd, DEFAULT_COLLAR};
use spatial_diar::sdb::{bin_omega, build_bank, delay_and_sum, design_narrowband, BeamformerBank, DEFAULT_LOADING};
use spatial_diar::sim::{dataset_meeting, make_osd_dataset, random_script, render, MeetingScript, MeetingSpec, OsdDatasetConfig, SourceKind, SpeakerSpec, Turn};
use spatial_diar::timeline::Annotation;

use common::*;

const TRAIN_MEETINGS: usize = 12;
const TRAIN_EPOCHS: usize = 6;
const TRAIN_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_1(bank: &mut Option<BeamformerBank>) -> Outcome {
    let geom = ArrayGeometry::default_circular();
    let t0 = Instant::now();
    let b = build_bank(&geom, 120, 128, DEFAULT_LOADING).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(0..b.directions());
        let theta = b.look_directions()[n];
        for f in 1..b.taps_len() / 2 {
            let omega = bin_omega(f, b.taps_len(), geom.sample_rate());
            worst = worst.max((b.response(n, omega, theta) - Complex64::new(1.0, 0.0)).norm());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    *bank = Some(b);
    outcome(worst <= 1e-6 && secs < 60.0, format!("max |B-1| = {worst:.2e}, {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let geom = ArrayGeometry::default_circular();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let f = rng.gen_range(1..64);
        let omega = bin_omega(f, 128, geom.sample_rate());
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let h = design_narrowband(&geom, omega, theta, 1e6).unwrap();
        let d = delay_and_sum(&geom, omega, theta);
        let dist = h.h.iter().zip(&d.h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(dist);
    }
    outcome(worst <= 1e-6, format!("max ||h - d/C|| = {worst:.2e}"))
}

fn criterion_3(bank: &BeamformerBank) -> Outcome {
    let geom = bank.geometry().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut voiced, mut hits, mut worst_sum, mut negative) = (0usize, 0usize, 0.0f64, false);
    for trial in 0..5 {
        let k = rng.gen_range(0..bank.directions());
        let script = MeetingScript {
            speakers: vec![SpeakerSpec {
                id: "a".into(),
                direction: bank.look_directions()[k],
                kind: SourceKind::Harmonic {
                    f0: rng.gen_range(110.0..280.0),
                },
            }],
            turns: vec![Turn {
                speaker: "a".into(),
                start: 1.0,
                end: 5.0,
            }],
            snr_db: 20.0,
            seed: 30 + trial,
            reflection: None,
        };
        let r = render(&script, &geom, 6.0).unwrap();
        let speech = r.annotation.support();
        for s in extract_svectors(bank, &r.audio, 1.0, 0.5).unwrap() {
            worst_sum = worst_sum.max((s.energies.iter().sum::<f64>() - 1.0).abs());
            negative |= s.energies.iter().any(|&e| e < 0.0);
            let inside = speech.regions().iter().any(|x| x.start <= s.window_start + 1e-9 && s.window_start + s.window_len <= x.end + 1e-9);
            if inside {
                voiced += 1;
                let arg = (0..s.energies.len()).max_by(|&a, &b| s.energies[a].total_cmp(&s.energies[b])).unwrap();
                hits += usize::from(arg == k);
            }
        }
    }
    outcome(
        hits == voiced && voiced > 0 && worst_sum <= 1e-9 && !negative,
        format!("argmax hits {hits}/{voiced} voiced windows, max |sum-1| = {worst_sum:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let ss: Vec<Vec<f64>> = (0..30).map(|_| (0..12).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let ax = cosine_matrix(&xs, SimilarityKind::Speaker).unwrap();
    let as_ = cosine_matrix(&ss, SimilarityKind::Spatial).unwrap();
    let one = fuse(&ax, &as_, FusionWeight::new(1.0).unwrap()).unwrap();
    let zero = fuse(&ax, &as_, FusionWeight::new(0.0).unwrap()).unwrap();
    let mid = fuse(&ax, &as_, FusionWeight::new(0.95).unwrap()).unwrap();
    let bitwise = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    let worst = mid
        .values()
        .iter()
        .zip(ax.values().iter().zip(as_.values()))
        .map(|(m, (x, s))| (m - (0.95 * x + 0.05 * s)).abs())
        .fold(0.0, f64::max);
    let ok = bitwise(one.values(), ax.values()) && bitwise(zero.values(), as_.values()) && worst <= 1e-15;
    outcome(ok, format!("endpoints bitwise, a=0.95 max deviation {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut k_ok, mut oracle_ok) = (0, 0);
    for _ in 0..50 {
        let k = rng.gen_range(2..=4);
        let m = rng.gen_range(12..=40);
        let sizes = random_sizes(&mut rng, m, k);
        let (a, _) = perturbed_blocks(&mut rng, &sizes);
        let got = nme_sc(&a, 4).unwrap();
        let oracle = nme_oracle(&a, 4);
        k_ok += usize::from(got.k == k);
        oracle_ok += usize::from(got.k == oracle.k && got.chosen_p == oracle.p);
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        k_ok >= 48 && oracle_ok == 50 && secs < 120.0,
        format!("k correct {k_ok}/50, oracle agreement {oracle_ok}/50, {secs:.1} s"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agree = 0;
    for _ in 0..50 {
        let dur = rng.gen_range(3.0..20.0);
        let (nr, nh) = (rng.gen_range(1..=4), rng.gen_range(0..=4));
        let reference = random_annotation(&mut rng, nr, dur, "r");
        let hypothesis = random_annotation(&mut rng, nh, dur, "h");
        let ok = [(DEFAULT_COLLAR, true), (DEFAULT_COLLAR, false)].iter().all(|&(collar, overlap)| {
            let got = score_der(&reference, &hypothesis, collar, overlap).counts;
            let want = brute_force_der(&reference, &hypothesis, collar, overlap);
            (got.total, got.miss, got.fa, got.spkerr) == (want.total, want.miss, want.fa, want.spkerr)
        });
        agree += usize::from(ok);
    }
    outcome(agree == 50, format!("exact agreement on {agree}/50 cases, both overlap modes, collar 0.25 s"))
}

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, v) in Variant::ALL.into_iter().enumerate() {
        let checks = gradient_check(v, 200, 70 + i as u64);
        let worst = checks.iter().map(|c| c.rel).fold(0.0, f64::max);
        ok &= checks.len() >= 200 && worst <= 1e-4;
        parts.push(format!("{v:?} {worst:.1e}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(ok && secs < 600.0, format!("worst rel error {}, {secs:.1} s", parts.join(", ")))
}

fn criterion_8(trained: &mut Option<DmsNet>) -> Outcome {
    let geom = ArrayGeometry::default_circular();
    let config = OsdDatasetConfig::default();
    let ds = make_osd_dataset(TRAIN_MEETINGS, &geom, &config).unwrap();
    let opts = TrainOptions {
        epochs: TRAIN_EPOCHS,
        lr: 2e-3,
        batch_size: 8,
        shuffle_seed: TRAIN_SEED,
    };
    let out = train_with(DmsNet::new(config.model.clone()).unwrap(), &ds.chunks, &opts).unwrap();

    let held_out = OsdDatasetConfig { seed: 99, ..config };
    let (mut probs, mut labels) = (Vec::new(), Vec::new());
    let (mut err_time, mut ref_time) = (0.0, 0.0);
    for i in 0..3 {
        let r = render(&dataset_meeting(&held_out, i).unwrap(), &geom, held_out.meeting_duration).unwrap();
        probs.extend(frame_posteriors(&out.net, &r.audio).unwrap());
        labels.extend(r.labels.frames.iter().copied());
        let detected = detect_overlap(&out.net, &r.audio, DEFAULT_THRESHOLD).unwrap();
        let reference = r.annotation.overlap();
        let rep = score_osd(&reference, &detected, held_out.meeting_duration);
        err_time += (rep.fp + rep.fn_) as f64 * 0.01;
        ref_time += reference.duration();
    }
    let acc = 100.0 * frame_accuracy(&probs, &labels, DEFAULT_THRESHOLD);
    let deter = 100.0 * err_time / ref_time;
    *trained = Some(out.net);
    outcome(
        ds.chunks.len() >= 200 && acc >= 90.0 && deter <= 35.0,
        format!("{} chunks, held-out accuracy {acc:.2}%, DetER {deter:.2}%", ds.chunks.len()),
    )
}

fn suite_meeting(i: u64) -> (MeetingScript, f64) {
    let spec = MeetingSpec {
        speakers: 2 + (i as usize % 3),
        duration: 30.0,
        overlap_ratio: (0.2, 0.4),
        seed: 900 + i,
        ..MeetingSpec::default()
    };
    (random_script(&spec).unwrap(), spec.duration)
}

fn criterion_9(bank: &BeamformerBank, net: &DmsNet) -> Outcome {
    let geom = bank.geometry().clone();
    let mut pipeline = Pipeline::with_parts(PipelineConfig::default(), bank.clone(), Some(net.clone()), None).unwrap();
    let (mut only, mut osd, mut xvec) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..10 {
        let (script, duration) = suite_meeting(i);
        let r = render(&script, &geom, duration).unwrap();
        let vad = r.annotation.support();
        let der = |a: &Annotation| score_der(&r.annotation, a, DEFAULT_COLLAR, true).der;
        pipeline.set_fusion_weight(0.95).unwrap();
        only.push(der(&pipeline.run(&r.audio, &vad, Mode::ClusterOnly).unwrap().annotation));
        osd.push(der(&pipeline.run(&r.audio, &vad, Mode::WithOsd).unwrap().annotation));
        pipeline.set_fusion_weight(1.0).unwrap();
        xvec.push(der(&pipeline.run(&r.audio, &vad, Mode::ClusterOnly).unwrap().annotation));
    }
    let (m_only, m_osd) = (median(only.clone()), median(osd.clone()));
    let (m_fused, m_xvec) = (m_only, median(xvec.clone()));
    outcome(
        m_osd < m_only && m_fused <= m_xvec,
        format!("median DER with_osd {m_osd:.2}% vs cluster_only {m_only:.2}%; fused {m_fused:.2}% vs x-vector only {m_xvec:.2}%"),
    )
}

fn criterion_10(bank: &BeamformerBank) -> Outcome {
    let geom = bank.geometry().clone();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let config = OsdDatasetConfig {
            seed: 10,
            ..OsdDatasetConfig::default()
        };
        let ds = make_osd_dataset(2, &geom, &config).unwrap();
        let opts = TrainOptions {
            epochs: 1,
            lr: 2e-3,
            batch_size: 8,
            shuffle_seed: 10,
        };
        let net = train_with(DmsNet::new(config.model.clone()).unwrap(), &ds.chunks, &opts).unwrap().net;
        let ckpt = dir.path().join(format!("{tag}.dmsn"));
        net.save(&ckpt).unwrap();
        let net = DmsNet::load(&ckpt).unwrap();

        let (script, duration) = suite_meeting(3);
        let r = render(&script, &geom, duration).unwrap();
        let pipeline = Pipeline::with_parts(PipelineConfig::default(), bank.clone(), Some(net), None).unwrap();
        let out = pipeline.run(&r.audio, &r.annotation.support(), Mode::WithOsd).unwrap();
        let rttm = dir.path().join(format!("{tag}.rttm"));
        spatial_diar::io::write_rttm(&rttm, &out.annotation, "meeting").unwrap();
        assert_eq!(std::fs::read(&rttm).unwrap(), serialize_rttm(&out.annotation, "meeting").into_bytes());
        (std::fs::read(&rttm).unwrap(), std::fs::read(&ckpt).unwrap())
    };
    let (r1, c1) = run("a");
    let (r2, c2) = run("b");
    outcome(
        r1 == r2 && c1 == c2 && !r1.is_empty(),
        format!("rttm {} bytes identical: {}, checkpoint {} bytes identical: {}", r1.len(), r1 == r2, c1.len(), c1 == c2),
    )
}

fn report(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let secs = t0.elapsed().as_secs_f64();
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    println!("{} criterion {id:2} {name}: {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let mut bank = None;
    let mut net = None;
    let mut all = true;
    all &= report(1, "distortionless constraint", || criterion_1(&mut bank));
    all &= report(2, "delay-and-sum limit", criterion_2);
    all &= report(3, "s-vector contract", || match &bank {
        Some(b) => criterion_3(b),
        None => outcome(false, "no bank from criterion 1".into()),
    });
    all &= report(4, "fusion endpoints", criterion_4);
    all &= report(5, "NME-SC correctness", criterion_5);
    all &= report(6, "DER oracle equivalence", criterion_6);
    all &= report(7, "DMSNet gradient check", criterion_7);
    all &= report(8, "DMSNet desk-scale learning", || criterion_8(&mut net));
    all &= report(9, "end-to-end improvement direction", || match (&bank, &net) {
        (Some(b), Some(n)) => criterion_9(b, n),
        _ => outcome(false, "needs the bank and the trained detector".into()),
    });
    all &= report(10, "determinism", || match &bank {
        Some(b) => criterion_10(b),
        None => outcome(false, "no bank from criterion 1".into()),
    });
    if !all {
        std::process::exit(1);
    }
}
