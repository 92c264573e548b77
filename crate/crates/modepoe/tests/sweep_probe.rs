// temporary sweep calibration probe; deleted before finalizing
use modepoe::bench::{gen_colormnist, ColorMnistSpec};
use modepoe::compose::compose_teacher;
use modepoe::discovery::{discover_prototypes, InitStrategy};
use modepoe::experiment::*;
use modepoe::io;
use modepoe::sampler::{sample_poe_teacher, sample_unconditional, GuidanceConfig};
use modepoe::schedule::linear_beta_schedule;
use modepoe::score::ScoreModel;
use modepoe::train::{train_backbone, TrainerConfig};
use modepoe::net::DenoiserArch;
use std::path::Path;

fn upscale(img: &[f64], res: usize, factor: usize) -> Vec<f64> {
    let big = res * factor;
    let mut out = vec![0.0; big * big * 3];
    for y in 0..big {
        for x in 0..big {
            for c in 0..3 {
                out[(y * big + x) * 3 + c] = img[((y / factor) * res + x / factor) * 3 + c];
            }
        }
    }
    out
}

fn dump(dir: &Path, name: &str, img: &[f64], res: usize) {
    io::write_png(&dir.join(format!("{name}.png")), &upscale(img, res, 16), res * 16, res * 16)
        .unwrap();
}

fn spec8(seed: u64) -> ColorMnistSpec {
    let mut spec = ColorMnistSpec::desk_default(seed);
    spec.resolution = 8;
    spec.digits = vec![0, 1, 2];
    spec.digit_colors = modepoe::bench::colormnist::DIGIT_PALETTE[..2].to_vec();
    spec.background_colors = modepoe::bench::colormnist::BACKGROUND_PALETTE[..2].to_vec();
    spec.held_out_pairs = vec![(1, 0)];
    spec.per_slot = 150;
    spec
}

#[test]
fn probe_pipeline_visual() {
    let spec = spec8(42);
    let res = spec.resolution;
    let dir = std::env::temp_dir().join("modepoe-visual");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();

    let ds = gen_colormnist::<f64>(&spec).unwrap();
    let train = ds.seen_training_set();
    let schedule = linear_beta_schedule(1000, 1e-4, 2e-2).unwrap();
    let arch = DenoiserArch {
        dim: spec.dim(),
        width: 192,
        hidden_layers: 2,
        time_feat_dim: 16,
        n_classes: ds.n_seen_classes(),
    };
    let mut tcfg = TrainerConfig::new(7);
    tcfg.epochs = 120;
    tcfg.batch = 32;
    tcfg.lr = 1e-3;
    let t0 = std::time::Instant::now();
    let out = train_backbone(&train, &arch, &schedule, &tcfg).unwrap();
    println!(
        "train {:.0}s loss first {:.4} mid {:.4} last {:.4}",
        t0.elapsed().as_secs_f64(),
        out.loss_trace.first().unwrap(),
        out.loss_trace[out.loss_trace.len() / 2],
        out.loss_trace.last().unwrap()
    );
    let model = out.model;

    // unconditional samples from the backbone
    let mut gcfg: GuidanceConfig<f64> = GuidanceConfig::new(8, 50);
    gcfg.x0_clip = Some((-1.0, 1.0));
    let uncond = sample_unconditional(&model, &gcfg, &schedule).unwrap();
    for (i, s) in uncond.iter().enumerate() {
        dump(&dir, &format!("uncond_{i}"), s, res);
    }

    // a training image and an OOD query
    let held = ds.held_out_slots();
    let ood_slot = held[0];
    let q_id = ds.image_ids_of_slot(ood_slot)[0];
    let x_q = ds.images[q_id].clone();
    dump(&dir, "query", &x_q, res);
    let seen_id = ds.image_ids_of_slot(0)[0];
    dump(&dir, "seen_example", &ds.images[seen_id], res);

    // discovery
    let dset = DiscoverySettings {
        t_start: 60,
        t_end: 360,
        t_step: 60,
        n_per_t: 24,
        n_iters: 100,
        base_step: 0.05,
        grad_tol: Some(1.0),
        ..DiscoverySettings::default()
    };
    let acfg = dset.to_ascent_config(x_q.len(), 5);
    let t1 = std::time::Instant::now();
    let pool = discover_prototypes(&model, &x_q, &acfg, &schedule).unwrap();
    println!("discovery {:.0}s pool size {}", t1.elapsed().as_secs_f64(), pool.len());
    let mut norms: Vec<f64> = pool.iter().map(|p| p.origin_grad_norm).collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "grad norms min {:.3} med {:.3} max {:.3}; flagged {}/{}",
        norms[0],
        norms[norms.len() / 2],
        norms[norms.len() - 1],
        pool.iter().filter(|p| p.cov_flagged).count(),
        pool.len()
    );
    let var_stats: Vec<f64> = pool.iter().flat_map(|p| p.var.iter().copied()).collect();
    let mean_var = var_stats.iter().sum::<f64>() / var_stats.len() as f64;
    println!("mean prototype var {mean_var:.4}");
    for (i, p) in pool.iter().take(8).enumerate() {
        let clipped: Vec<f64> = p.m.iter().map(|&v| v.clamp(-1.0, 1.0)).collect();
        dump(&dir, &format!("proto_{i}_t{}", p.origin_t), &clipped, res);
    }

    // composition
    let (teacher, sel) = compose_teacher(&pool, &x_q, 3, 0.5).unwrap();
    println!("selected {:?}", sel.indices);
    let mu_clip: Vec<f64> = teacher.mu.iter().map(|&v| v.clamp(-1.0, 1.0)).collect();
    dump(&dir, "teacher_mu", &mu_clip, res);
    let tv = teacher.var.iter().sum::<f64>() / teacher.var.len() as f64;
    println!("teacher mean var {tv:.5}");

    // poe samples
    let mut pcfg: GuidanceConfig<f64> = GuidanceConfig::new(8, 51);
    pcfg.x0_clip = Some((-1.0, 1.0));
    let poe = sample_poe_teacher(&model, &teacher, &pcfg, &schedule).unwrap();
    for (i, s) in poe.iter().enumerate() {
        dump(&dir, &format!("poe_{i}"), s, res);
    }

    // distance diagnostics vs the OOD class
    let members: Vec<Vec<f64>> = ds.image_ids_of_slot(ood_slot).iter().map(|&i| ds.images[i].clone()).collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let nearest = |x: &[f64]| -> f64 {
        members.iter().map(|m| dist(x, m)).fold(f64::INFINITY, f64::min)
    };
    println!("query nearest-member dist {:.2}", nearest(&x_q));
    let poe_dists: Vec<f64> = poe.iter().map(|s| nearest(s)).collect();
    println!("poe sample nearest-member dists {:?}", poe_dists.iter().map(|d| (d * 10.0).round() / 10.0).collect::<Vec<_>>());
    // reference radius scale: distance between two members of the class
    let d01 = dist(&members[0], &members[1]);
    let d02 = dist(&members[0], &members[20]);
    println!("member-member dists: {d01:.2} {d02:.2}");
    println!("artifacts in {}", dir.display());
}
