mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stylize_core::losses::{
    content_loss, directional_loss, gate_patches, mask_loss, patch_loss, sample_patches, total_loss, tv_loss,
    LossContext, StyleConfig,
};
use stylize_core::perception::LinearEncoder;
use stylize_core::{Embedding, Encoder, Error, Image, Mask, ParsedInstruction};

fn img(i: &common::Img) -> Image<f64> {
    Image::from_vec(i.c, i.h, i.w, i.v.clone()).unwrap()
}

fn parsed() -> ParsedInstruction {
    ParsedInstruction::new("art on fire", "the boat").unwrap()
}

fn emb(v: Vec<f64>) -> Embedding<f64> {
    Embedding::normalize(v).unwrap()
}

#[test]
fn directional_examples_and_errors() {
    let a = emb(vec![1.0, 0.0, 0.0, 0.0]);
    let b = emb(vec![0.0, 1.0, 0.0, 0.0]);
    let c = emb(vec![0.0, 0.0, 1.0, 0.0]);
    let d = emb(vec![0.0, 0.0, 0.0, 1.0]);
    // ΔI = a − b
    assert_eq!(directional_loss(&a, &b, &a, &b).unwrap(), 0.0);
    assert_eq!(directional_loss(&a, &b, &c, &d).unwrap(), 1.0);
    assert_eq!(directional_loss(&a, &b, &b, &a).unwrap(), 2.0);
    let short = emb(vec![1.0, 0.0]);
    assert!(matches!(
        directional_loss(&a, &b, &short, &short),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn content_examples() {
    let zero = Image::<f64>::zeros(3, 16, 16);
    let half = Image::<f64>::filled(3, 16, 16, 0.5);
    assert_eq!(content_loss(&zero, &zero, None).unwrap(), 0.0);
    assert_eq!(content_loss(&half, &zero, None).unwrap(), 0.25);

    let s = common::random_img(1, 3, 8, 8);
    let c = common::random_img(2, 3, 8, 8);
    // 2×2 grid of 4×4 block means, by hand.
    let mut want = 0.0;
    for ch in 0..3 {
        for by in 0..2 {
            for bx in 0..2 {
                let mut diff = 0.0;
                for y in 0..4 {
                    for x in 0..4 {
                        diff += s.at(ch, 4 * by + y, 4 * bx + x) - c.at(ch, 4 * by + y, 4 * bx + x);
                    }
                }
                want += (diff / 16.0).powi(2);
            }
        }
    }
    want /= 12.0;
    let got = content_loss(&img(&s), &img(&c), None).unwrap();
    assert!((got - want).abs() < 1e-14);
    assert!(content_loss(&img(&s), &Image::zeros(3, 8, 9), None).is_err());
}

#[test]
fn tv_examples() {
    assert_eq!(tv_loss(&Image::<f64>::filled(3, 5, 7, 0.3)).unwrap(), 0.0);
    let pair = Image::from_vec(1, 1, 2, vec![0.0f64, 1.0]).unwrap();
    assert_eq!(tv_loss(&pair).unwrap(), 1.0);
    // Ramp v = (x + 2y)/8: horizontal diffs 1/8, vertical diffs 2/8.
    let ramp = Image::<f64>::from_fn(1, 3, 3, |_, y, x| (x + 2 * y) as f64 / 8.0);
    assert_eq!(tv_loss(&ramp).unwrap(), 1.0 / 64.0 + 4.0 / 64.0);
    assert!(matches!(
        tv_loss(&Image::<f64>::zeros(1, 1, 1)),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn mask_examples() {
    let c = Image::<f64>::filled(2, 2, 2, 0.25);
    let s = Image::<f64>::filled(2, 2, 2, 0.75);
    let m = Mask::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(mask_loss(&s, &c, &m).unwrap(), 0.125);
    assert_eq!(mask_loss(&s, &c, &Mask::filled(2, 2, 1.0)).unwrap(), 0.0);
    assert_eq!(mask_loss(&c, &c, &Mask::filled(2, 2, 0.0)).unwrap(), 0.0);
    assert!(mask_loss(&s, &c, &Mask::filled(3, 2, 1.0)).is_err());
}

#[test]
fn patch_loss_matches_step_by_step_oracle() {
    let s = common::random_img(11, 3, 64, 64);
    let c = common::random_img(12, 3, 64, 64);
    let mask_v: Vec<f64> = (0..64 * 64).map(|i| if i % 64 < 40 { 1.0 } else { 0.2 }).collect();
    let mask = Mask::from_vec(64, 64, mask_v.clone()).unwrap();
    let enc = LinearEncoder::<f64>::mock(512, 0);
    let oracle = common::MockEncoder::new(512, 0);
    let cfg = StyleConfig {
        n_patches: 2,
        threshold: 0.0,
        ..StyleConfig::default()
    };
    let sty = enc.encode_text("art on fire").unwrap();
    let src = enc.encode_text("a Photo").unwrap();
    let (v, used) = patch_loss(
        &img(&s),
        &img(&c),
        &mask,
        &sty,
        &src,
        &cfg,
        &enc,
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert_eq!(used, 2);

    let size = 32;
    let patches = common::draw_patches(&mask_v, 64, 64, size, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(5));
    let (ts, tc) = (oracle.text("art on fire"), oracle.text("a Photo"));
    let mut want = 0.0;
    for p in &patches {
        let prep = |i: &common::Img| common::resize(&common::warp(&i.crop(p.y, p.x, size, size), &p.offsets), 16, 16);
        want += common::directional(&oracle.image(&prep(&s)), &oracle.image(&prep(&c)), &ts, &tc);
    }
    want /= 2.0;
    assert!((v - want).abs() < 1e-9, "{v} vs {want}");
}

#[test]
fn patch_gating_examples() {
    let s = img(&common::random_img(1, 3, 32, 32));
    let c = img(&common::random_img(2, 3, 32, 32));
    let enc = LinearEncoder::<f64>::mock(64, 0);
    let sty = enc.encode_text("fire").unwrap();
    let src = enc.encode_text("a Photo").unwrap();
    let cfg = StyleConfig::default();
    let zero = Mask::filled(32, 32, 0.0);
    let rng = &mut ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        patch_loss(&s, &c, &zero, &sty, &src, &cfg, &enc, rng).unwrap(),
        (0.0, 0)
    );
    let ones = Mask::filled(32, 32, 1.0);
    let (_, used) = patch_loss(&s, &c, &ones, &sty, &src, &cfg, &enc, rng).unwrap();
    assert_eq!(used, cfg.n_patches);
}

#[test]
fn reject_tau_zeroes_converged_patches() {
    let s = img(&common::random_img(1, 3, 32, 32));
    let c = img(&common::random_img(2, 3, 32, 32));
    let enc = LinearEncoder::<f64>::mock(64, 0);
    let sty = enc.encode_text("fire").unwrap();
    let src = enc.encode_text("a Photo").unwrap();
    let ones = Mask::filled(32, 32, 1.0);
    let base = StyleConfig {
        n_patches: 8,
        ..StyleConfig::default()
    };
    let run = |tau: Option<f64>| {
        let cfg = StyleConfig {
            reject_tau: tau,
            ..base.clone()
        };
        patch_loss(&s, &c, &ones, &sty, &src, &cfg, &enc, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    };
    let (all, n) = run(None);
    let (none, n2) = run(Some(3.0));
    assert_eq!((n, n2), (8, 8));
    assert_eq!(none, 0.0);
    assert!(all > 0.0);
    assert_eq!(run(Some(0.0)).0, all);
}

#[test]
fn total_loss_matches_oracle_and_zero_weights() {
    let s = common::random_img(21, 3, 32, 32);
    let c = common::random_img(22, 3, 32, 32);
    let mask_v: Vec<f64> = (0..32 * 32).map(|i| if (i / 32) < 24 { 0.9 } else { 0.1 }).collect();
    let mask = Mask::from_vec(32, 32, mask_v.clone()).unwrap();
    let enc = LinearEncoder::<f64>::mock(512, 0);
    let cfg = StyleConfig::default();
    let b = total_loss(
        &img(&s),
        &img(&c),
        &mask,
        &parsed(),
        &cfg,
        &enc,
        &mut ChaCha8Rng::seed_from_u64(8),
    )
    .unwrap();
    let oracle = common::MockEncoder::new(512, 0);
    let (terms, total, kept) = common::total(
        &s,
        &c,
        &mask_v,
        "art on fire",
        &common::OracleCfg::default(),
        &oracle,
        8,
    );
    let got = [b.dir, b.patch, b.content, b.tv, b.mask];
    for (g, w) in got.iter().zip(terms) {
        assert!((g - w).abs() < 1e-9, "{g} vs {w}");
    }
    assert!((b.total - total).abs() < 1e-6);
    assert_eq!(b.patches_used, kept);
    assert!(kept > 0);

    let zero = StyleConfig {
        lambda_d: 0.0,
        lambda_p: 0.0,
        lambda_c: 0.0,
        lambda_tv: 0.0,
        lambda_m: 0.0,
        ..cfg
    };
    let z = total_loss(
        &img(&s),
        &img(&c),
        &mask,
        &parsed(),
        &zero,
        &enc,
        &mut ChaCha8Rng::seed_from_u64(8),
    )
    .unwrap();
    assert_eq!(z.total, 0.0);
    assert_eq!([z.dir, z.patch, z.content, z.tv, z.mask], got);
}

#[test]
fn config_validation() {
    assert!(StyleConfig {
        threshold: 1.2,
        ..StyleConfig::default()
    }
    .validate()
    .is_err());
    assert!(StyleConfig {
        patch_size: 4,
        ..StyleConfig::default()
    }
    .validate()
    .is_err());
    assert!(StyleConfig {
        n_patches: 0,
        ..StyleConfig::default()
    }
    .validate()
    .is_err());
    assert!(StyleConfig {
        lambda_c: -1.0,
        ..StyleConfig::default()
    }
    .validate()
    .is_err());
    assert_eq!(StyleConfig::default().effective_patch_size(64, 64), 32);
    assert_eq!(StyleConfig::default().effective_patch_size(512, 300), 128);
    assert_eq!(StyleConfig::default().effective_patch_size(8, 8), 8);
}

fn random_unit(seed: u64, d: usize) -> Vec<f64> {
    common::unit(common::random_img(seed, 1, 1, d).v.iter().map(|v| v - 0.5).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn directional_in_range_and_sign_symmetric(s in 0u64..100_000) {
        let (a, b, c, d) = (random_unit(s, 8), random_unit(s + 1, 8), random_unit(s + 2, 8), random_unit(s + 3, 8));
        let l = directional_loss(&emb(a.clone()), &emb(b.clone()), &emb(c.clone()), &emb(d.clone())).unwrap();
        prop_assert!((0.0..=2.0).contains(&l));
        // Swapping both pairs negates ΔI and ΔT.
        let m = directional_loss(&emb(b), &emb(a), &emb(d), &emb(c)).unwrap();
        prop_assert!((l - m).abs() < 1e-12);
    }

    #[test]
    fn gating_is_monotone(seed in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mask = Mask::from_vec(32, 32, common::random_img(seed, 1, 32, 32).v).unwrap();
        let samples = sample_patches::<f64, _>(&mask, 8, 32, 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let kept_lo = gate_patches(&samples, lo);
        let kept_hi = gate_patches(&samples, hi);
        prop_assert!(kept_hi.iter().all(|i| kept_lo.contains(i)));
        prop_assert_eq!(gate_patches(&samples, 0.0).len(), samples.len());
    }

    #[test]
    fn mask_loss_zero_iff_unchanged_outside(seed in 0u64..10_000, flip in 0usize..16) {
        let c = img(&common::random_img(seed, 3, 4, 4));
        let mvals: Vec<f64> = (0..16).map(|i| if i % 3 == 0 { 1.0 } else { 0.5 }).collect();
        let m = Mask::from_vec(4, 4, mvals.clone()).unwrap();
        let mut s = c.clone();
        let (y, x) = (flip / 4, flip % 4);
        s.set(1, y, x, if c.get(1, y, x) > 0.5 { 0.0 } else { 1.0 });
        let l = mask_loss(&s, &c, &m).unwrap();
        prop_assert_eq!(l == 0.0, mvals[flip] == 1.0);
    }

    #[test]
    fn breakdown_invariants(seed in 0u64..1000) {
        let s = common::random_img(seed, 3, 16, 16);
        let c = common::random_img(seed + 7, 3, 16, 16);
        let m = Mask::from_vec(16, 16, common::random_img(seed + 9, 1, 16, 16).v).unwrap();
        let enc = LinearEncoder::<f64>::mock(32, 0);
        let cfg = StyleConfig { threshold: 0.4, n_patches: 6, ..StyleConfig::default() };
        let b = total_loss(&img(&s), &img(&c), &m, &parsed(), &cfg, &enc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!((0.0..=2.0).contains(&b.dir) && (0.0..=2.0).contains(&b.patch));
        prop_assert!(b.tv >= 0.0 && b.mask >= 0.0 && b.content >= 0.0);
        let w = 500.0 * b.dir + 9000.0 * b.patch + 150.0 * b.content + 2e-3 * b.tv + 0.4 * 1000.0 * b.mask;
        prop_assert!((b.total - w).abs() <= 1e-9 * w.abs().max(1.0));
    }
}

#[test]
fn gradients_match_finite_differences_per_term() {
    let content = common::Img::new(3, 8, 8, |c, y, x| {
        0.2 + 0.6 * (((c * 5 + y * 3 + x * 7) % 11) as f64 / 11.0)
    });
    let stylized = common::Img::new(3, 8, 8, |c, y, x| {
        0.1 + 0.8 * (((c * 7 + y * 5 + x * 3) % 13) as f64 / 13.0)
    });
    let mask = Mask::from_fn(8, 8, |y, x| if x < 5 { 0.95 } else { 0.2 + 0.05 * y as f64 });
    let enc = LinearEncoder::<f64>::mock(64, 1);
    for term in 0..5 {
        let mut l = [0.0; 5];
        l[term] = 1.0;
        let cfg = StyleConfig {
            lambda_d: l[0],
            lambda_p: l[1],
            lambda_c: l[2],
            lambda_tv: l[3],
            lambda_m: l[4],
            n_patches: 4,
            threshold: 0.5,
            ..StyleConfig::default()
        };
        let content_img = img(&content);
        let ctx = LossContext::new(&content_img, &mask, &parsed(), &cfg, &enc).unwrap();
        let base = img(&stylized);
        let (_, g) = ctx
            .evaluate_with_grad(&base, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        let f = |i: usize, v: f64| {
            let mut s = base.clone();
            s.data_mut()[i] = v;
            ctx.evaluate(&s, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().total
        };
        let (frac, worst) = common::gradient_agreement(g.data(), f, base.data(), 1e-4, 1e-3);
        assert!(frac >= 0.95, "term {term}: {frac} agree, worst {worst}");
    }
}

#[test]
fn encoder_vjp_is_adjoint_of_jacobian() {
    let enc = LinearEncoder::<f64>::mock(32, 2);
    let x = img(&common::random_img(3, 3, 12, 12));
    let g: Vec<f64> = random_unit(4, 32);
    let vjp = enc.image_vjp(&x, &g).unwrap();
    let dir = common::random_img(5, 3, 12, 12);
    let h = 1e-6;
    let mut plus = x.clone();
    let mut minus = x.clone();
    for (i, d) in dir.v.iter().enumerate() {
        plus.data_mut()[i] += h * (d - 0.5);
        minus.data_mut()[i] -= h * (d - 0.5);
    }
    let (ep, em) = (enc.encode_image(&plus).unwrap(), enc.encode_image(&minus).unwrap());
    let jv: f64 = ep
        .values()
        .iter()
        .zip(em.values())
        .zip(&g)
        .map(|((a, b), gi)| (a - b) / (2.0 * h) * gi)
        .sum();
    let vj: f64 = vjp.data().iter().zip(&dir.v).map(|(a, d)| a * (d - 0.5)).sum();
    assert!((jv - vj).abs() < 1e-6 * jv.abs().max(1.0), "{jv} vs {vj}");
}
