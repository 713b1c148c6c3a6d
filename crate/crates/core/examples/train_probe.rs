use std::path::Path;
use std::time::Instant;

use sotto_core::metrics::{mean_cer, psr, EvalRecord, MetricConfig};
use sotto_core::models::{generate_corpus, load_bundle, save_bundle, train_toy_models};
use sotto_core::optim::{train, TrainConfig};
use sotto_core::prepare::{search_target_audio, SearchConfig};
use sotto_core::runtime::{protect, UapPool};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_epoch: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(10);
    let max_iter: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(16);
    let lambda: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(50.0);
    let sigma: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let alpha: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.001);

    let t0 = Instant::now();
    let corpus = generate_corpus(42);
    println!(
        "corpus: {} train / {} test clips in {:.1?}",
        corpus.train.len(),
        corpus.test.len(),
        t0.elapsed()
    );

    let cache = Path::new("target/toy-fixtures/bundle-s42.bin");
    let bundle = if cache.exists() {
        let b = load_bundle(cache).expect("cached bundle");
        println!("loaded cached bundle from {}", cache.display());
        b
    } else {
        let t1 = Instant::now();
        let b = train_toy_models(&corpus, 42).expect("toy training");
        println!("trained models in {:.1?}", t1.elapsed());
        std::fs::create_dir_all(cache.parent().unwrap()).unwrap();
        save_bundle(&b, cache).unwrap();
        b
    };
    println!(
        "gates: ae={:.4} asr={:.4} tts={:.4}",
        bundle.meta.ae_val_rel_l2, bundle.meta.asr_train_exact, bundle.meta.tts_round_trip
    );

    // Decoder robustness: clean recon error and the output shift caused by
    // unit-variance latent noise, averaged over a few test clips.
    {
        use rand::Rng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        use rand::SeedableRng;
        let mut clean_err = 0.0;
        let mut noise_shift = 0.0;
        let n = 10.min(corpus.test.len());
        for clip in corpus.test.iter().take(n) {
            let z = bundle.encode(&clip.samples).unwrap();
            let clean = bundle.decode(&z).unwrap();
            let mut zn = z.clone();
            zn.values.mapv_inplace(|v| {
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                v + (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            });
            let noisy = bundle.decode(&zn).unwrap();
            let num: f64 = clean.iter().zip(&clip.samples).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = clip.samples.iter().map(|b| b * b).sum::<f64>().max(1e-300);
            clean_err += (num / den).sqrt();
            let num2: f64 = noisy.iter().zip(&clean).map(|(a, b)| (a - b) * (a - b)).sum();
            let den2: f64 = clean.iter().map(|b| b * b).sum::<f64>().max(1e-300);
            noise_shift += (num2 / den2).sqrt();
        }
        println!(
            "decoder robustness: clean rel_l2={:.4} noisy-shift rel_l2={:.4}",
            clean_err / n as f64,
            noise_shift / n as f64
        );
    }

    let t2 = Instant::now();
    let search_cfg = SearchConfig::default();
    let target = search_target_audio("open the box now", &search_cfg, &bundle).expect("search");
    println!(
        "target search in {:.1?}: scale={} loss={:.4} latent {}x{}",
        t2.elapsed(),
        target.scale,
        target.search_loss,
        target.target_latent.channels(),
        target.target_latent.frames()
    );

    let z_t = &target.target_latent.values;
    let zt_mean = z_t.mapv(f64::abs).mean().unwrap();
    let zt_max = z_t.mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    let z0 = bundle.encode(&corpus.train[0].samples).unwrap();
    let z0_mean = z0.values.mapv(f64::abs).mean().unwrap();
    let z0_max = z0.values.mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    println!("latent scale: |z_t| mean={zt_mean:.4} max={zt_max:.4}; |z_clip| mean={z0_mean:.4} max={z0_max:.4}");

    let config = TrainConfig {
        lambda,
        sigma,
        alpha,
        max_epoch,
        max_iter,
        ..TrainConfig::default()
    };
    let t3 = Instant::now();
    let (artifact, trace) = train(&config, &corpus.train, &target, &bundle, None).expect("train");
    let elapsed = t3.elapsed();
    let total_iters = (max_epoch * max_iter) as f64;
    println!(
        "uap train {}x{} lambda={} in {:.1?} ({:.3}s/iter), max|delta|={:.4}",
        max_epoch,
        max_iter,
        lambda,
        elapsed,
        elapsed.as_secs_f64() / total_iters,
        artifact.max_abs()
    );
    let series = trace.l_total_series();
    println!(
        "l_total first={:.4} last={:.4}; l_asr first={:.4} last={:.4}",
        series.first().unwrap(),
        series.last().unwrap(),
        trace.records.first().unwrap().l_asr,
        trace.records.last().unwrap().l_asr
    );

    let t4 = Instant::now();
    let mut pool = UapPool::new(vec![artifact], 0).unwrap();
    let cfg = MetricConfig::default();
    let mut records = Vec::new();
    let mut target_hits = 0usize;
    let n_eval = 50.min(corpus.test.len());
    for clip in corpus.test.iter().take(n_eval) {
        let result = protect(clip, &mut pool, &bundle).expect("protect");
        let hyp = bundle.asr.transcribe(&result.protected.samples).text;
        if hyp == "open the box now" {
            target_hits += 1;
        }
        let rec =
            EvalRecord::score(&clip.id, clip.transcript.as_deref().unwrap(), &hyp, &cfg).unwrap();
        records.push(rec);
    }
    println!(
        "eval {} clips in {:.1?}: psr={:.1}% mean_cer={:.1}% target_hits={}/{}",
        n_eval,
        t4.elapsed(),
        psr(&records).unwrap(),
        mean_cer(&records).unwrap(),
        target_hits,
        n_eval
    );
    for rec in records.iter().take(5) {
        println!("  {}: '{}' -> '{}' cer={:.1}", rec.clip_id, rec.reference, rec.hypothesis, rec.cer);
    }
}
