//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use aks_core::clifford::{self, CliffordParams};
use aks_core::flow::{ad_equivariance_residual, integrate_flow, FlowConfig, Grid, PathSegment};
use aks_core::frame::{connection_at, flatness_residuals, FrameGrid, immersion_det, integrate_frame, killing_residual, FrameOptions};
use aks_core::linalg::{expm, max_abs_real, RMat, C64};
use aks_core::loop_algebra::{DecompositionRule, LoopElement};
use aks_core::periodicity::{detect_period, translation_residual, PeriodKind};
use aks_core::random::{random_initial, random_loop_element};
use aks_core::spectral::{char_poly, charpoly_drift, mu_eigenvalues};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn off_diagonal(k: &RMat) -> RMat {
    let n = k.nrows();
    let mut x = RMat::zeros(2 * n, 2 * n);
    x.view_mut((0, n), (n, n)).copy_from(k);
    x.view_mut((n, 0), (n, n)).copy_from(&(-k.transpose()));
    x
}

/// The 101x101 Clifford run, shared by criteria 1 and 11: the flow grid,
/// the frames and the wall time.
fn clifford_run() -> &'static (FrameGrid, f64) {
    static RUN: OnceLock<(FrameGrid, f64)> = OnceLock::new();
    RUN.get_or_init(|| {
        let started = Instant::now();
        let setup = clifford::setup(CliffordParams::new(0.6, 0.8).unwrap(), 1.0).unwrap();
        let grid = Grid::uniform(2, 0.0, PI / 50.0, 101).unwrap();
        let cfg = FlowConfig::new(DecompositionRule::Simple, 1e-3).with_grid(grid).with_coords(setup.coords.clone());
        let flow = integrate_flow(&setup.x0, &cfg).unwrap();
        let frames = integrate_frame(&flow, &FrameOptions::new(1.0).with_initial(setup.initial_frame.clone())).unwrap();
        (frames, started.elapsed().as_secs_f64())
    })
}

fn clifford_golden() -> Outcome {
    let (frames, secs) = clifford_run();
    let mut worst = 0.0_f64;
    for fr in &frames.frames {
        let expected = clifford::closed_form_f(0.6, 0.8, [fr.t[0], fr.t[1]]);
        for (u, v) in fr.column(3).iter().zip(expected.iter()) {
            worst = worst.max((u - v).abs());
        }
    }
    outcome(worst < 1e-6 && *secs < 30.0, format!("max |f - closed form| = {worst:.3e} over {} points, {secs:.1} s", frames.frames.len()))
}

fn connection_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let (x1, x2, y1, y2): (f64, f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let k = RMat::from_row_slice(2, 2, &[x1, x2, y1, y2]);
        let x = LoopElement::from_real(4, 1, vec![off_diagonal(&k)]).unwrap();
        let a2 = &connection_at(&x, DecompositionRule::Simple, 1.0).unwrap()[1];
        let computed = -a2.view((0, 2), (2, 2)).into_owned();
        let kkk = &k * k.transpose() * &k;
        let (p, q, r) = (x1 * x1 + y1 * y1, x1 * x2 + y1 * y2, x2 * x2 + y2 * y2);
        let printed = RMat::from_row_slice(2, 2, &[x1 * p + x2 * q, x1 * q + x2 * r, y1 * p + y2 * q, y1 * q + y2 * r]);
        let lower = a2.view((2, 0), (2, 2)).into_owned();
        worst = worst
            .max(max_abs_real(&(&computed - &kkk)))
            .max(max_abs_real(&(&computed - &printed)))
            .max(max_abs_real(&(lower - computed.transpose())));
    }
    outcome(worst < 1e-12, format!("max deviation {worst:.3e} over 1000 random K"))
}

fn immersion_determinant() -> Outcome {
    let det = |x1: f64, y1: f64, x2: f64, y2: f64| {
        let k = RMat::from_row_slice(2, 2, &[x1, x2, y1, y2]);
        immersion_det(&LoopElement::from_real(4, 1, vec![off_diagonal(&k)]).unwrap())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (x1, y1, x2, y2) = (v[0], v[1], v[2], v[3]);
        let factored = (x1 * x2 + y1 * y2) * (x1 * y2 - y1 * x2);
        worst = worst.max((det(x1, y1, x2, y2) - factored).abs());
    }
    let e1 = det(1.0, 0.0, 0.0, 1.0);
    let e2 = det(2.0, 0.0, 1.0, 1.0);
    let e3 = immersion_det(&LoopElement::zero(4, true).unwrap());
    let examples_ok = e1.abs() < 1e-12 && (e2 - 4.0).abs() < 1e-12 && e3 == 0.0;
    outcome(worst < 1e-10 && examples_ok, format!("max deviation {worst:.3e}; examples {e1}, {e2}, {e3}"))
}

/// Unit-time path `t1: 0 → 1`, then `t2: 0 → 1`.
fn unit_paths() -> Vec<PathSegment> {
    vec![PathSegment { direction: 1, length: 1.0 }, PathSegment { direction: 2, length: 1.0 }]
}

fn final_drifts(seed: u64, h: f64) -> (f64, f64, f64) {
    let x0 = random_initial(2, 2, seed);
    let flow = integrate_flow(&x0, &FlowConfig::new(DecompositionRule::Simple, h).with_path(unit_paths())).unwrap();
    let base = char_poly(&flow.x0);
    let mut cp = 0.0_f64;
    let mut norm = 0.0_f64;
    let mut coeff = 0.0_f64;
    for s in flow.path_samples.iter().skip(1) {
        let elapsed: f64 = s.t.iter().map(|v| v.abs()).sum();
        cp = cp.max(charpoly_drift(&base, &char_poly(&s.x)) / elapsed);
        norm = norm.max(s.residual.norm_drift / elapsed);
        coeff = coeff.max(s.residual.coefficient_norm_drift / elapsed);
    }
    (cp, norm, coeff)
}

fn isospectrality() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..5 {
        worst = worst.max(final_drifts(seed, 1e-3).0);
    }
    // Halving test where truncation error dominates roundoff.
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let coarse = final_drifts(seed, 0.1).0;
        let fine = final_drifts(seed, 0.05).0;
        ratios.push(coarse / fine);
    }
    let ratio_ok = ratios.iter().all(|r| (10.0..=24.0).contains(r));
    let rs: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
    outcome(worst < 1e-7 && ratio_ok, format!("max charpoly drift/unit time {worst:.3e} at h = 1e-3; h-halving ratios [{}] at h = 0.1 → 0.05", rs.join(", ")))
}

fn norm_conservation() -> Outcome {
    let mut worst = 0.0_f64;
    let mut coeff = 0.0_f64;
    for seed in 0..5 {
        let (_, n, cn) = final_drifts(seed, 1e-3);
        worst = worst.max(n);
        coeff = coeff.max(cn);
    }
    outcome(worst < 1e-8, format!("max invariant-norm drift/unit time {worst:.3e} (coefficient-sum form, not conserved: {coeff:.3e})"))
}

fn frobenius() -> Outcome {
    let mut worst = 0.0_f64;
    for (seed, rule) in [(1, DecompositionRule::Admissible), (2, DecompositionRule::Simple), (3, DecompositionRule::CurvedFlat)] {
        let x0 = random_initial(2, 2, seed);
        let a = integrate_flow(&x0, &FlowConfig::new(rule, 1e-3).with_path(vec![PathSegment { direction: 1, length: 0.5 }, PathSegment { direction: 2, length: 0.5 }])).unwrap();
        let b = integrate_flow(&x0, &FlowConfig::new(rule, 1e-3).with_path(vec![PathSegment { direction: 2, length: 0.5 }, PathSegment { direction: 1, length: 0.5 }])).unwrap();
        worst = worst.max(a.final_path_x().max_abs_diff(b.final_path_x()));
    }
    outcome(worst < 1e-6, format!("max |X_12 - X_21| at (0.5, 0.5) = {worst:.3e} over three rules"))
}

fn flat_grid_frames(rule: DecompositionRule, seed: u64) -> (f64, f64) {
    let x0 = random_initial(2, 2, seed);
    let cfg = FlowConfig::new(rule, 1e-3).with_grid(Grid::uniform(2, 0.0, 1e-2, 9).unwrap());
    let flow = integrate_flow(&x0, &cfg).unwrap();
    let frames = integrate_frame(&flow, &FrameOptions::new(1.0)).unwrap();
    let res = flatness_residuals(&frames).unwrap();
    res.iter().filter(|r| r.interior).fold((0.0_f64, 0.0_f64), |(o, e), r| (o.max(r.omega), e.max(r.eta)))
}

fn flatness() -> Outcome {
    let (adm_omega, _) = flat_grid_frames(DecompositionRule::Admissible, 4);
    let (s_omega, s_eta) = flat_grid_frames(DecompositionRule::Simple, 5);
    let (cf_omega, cf_eta) = flat_grid_frames(DecompositionRule::CurvedFlat, 6);
    let pass = adm_omega < 1e-4 && s_omega == 0.0 && s_eta == 0.0 && cf_eta < 1e-4 && cf_omega < 1e-4;
    outcome(pass, format!("admissible ω {adm_omega:.3e}; simple ω {s_omega:e}, η {s_eta:e}; curved flat ω {cf_omega:.3e}, η {cf_eta:.3e}"))
}

fn ad_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let x = random_loop_element(&mut rng, 3, -2, 1);
        let y = random_loop_element(&mut rng, 3, -1, 1);
        for i in [2, 3] {
            worst = worst.max(ad_equivariance_residual(i, &x, &y, 1e-5).unwrap());
        }
    }
    outcome(worst < 1e-7, format!("max central-difference residual {worst:.3e} for V_2, V_3 (n = 3)"))
}

fn quasiperiodicity() -> Outcome {
    // Type I on the Clifford torus.
    let setup = clifford::setup(CliffordParams::new(0.6, 0.8).unwrap(), 1.0).unwrap();
    let grid = Grid::uniform(2, 0.0, PI / 10.0, 21).unwrap();
    let cfg = FlowConfig::new(DecompositionRule::Simple, 1e-3).with_grid(grid).with_coords(setup.coords.clone());
    let flow = integrate_flow(&setup.x0, &cfg).unwrap();
    let frames = integrate_frame(&flow, &FrameOptions::new(1.0).with_initial(setup.initial_frame.clone())).unwrap();
    let mut type1 = 0.0_f64;
    let mut type1_ok = true;
    for p in [[2.0 * PI, 0.0], [PI, PI / 2.0], [0.3 * PI, 1.1 * PI]] {
        let rep = detect_period(&flow, Some(&frames), &p, 1e-6).unwrap();
        type1_ok &= rep.kind == PeriodKind::TypeI;
        type1 = type1.max(rep.f_residual);
    }

    // Type II: d = 0 keeps X_0 constant, so X(t1) = e^(t1 X_0) X(0) e^(-t1 X_0).
    let x0 = random_initial(2, 0, 17);
    let grid = Grid::new(vec![0.0, 0.0], vec![0.05, 0.05], vec![21, 5]).unwrap();
    let flow2 = integrate_flow(&x0, &FlowConfig::new(DecompositionRule::Simple, 1e-3).with_grid(grid)).unwrap();
    let frames2 = integrate_frame(&flow2, &FrameOptions::new(1.0)).unwrap();
    let p = [0.5, 0.0];
    let rep = detect_period(&flow2, Some(&frames2), &p, 1e-6).unwrap();
    let x00 = flow2.x0.coeff(0).unwrap().map(|v| v.re);
    let expected_b = expm(&(x00 * -p[0]));
    let b_err = max_abs_real(&(&rep.b - &expected_b)).min(max_abs_real(&(&rep.b + &expected_b)));
    let type2_ok = rep.kind == PeriodKind::TypeII && rep.x_residual < 1e-9 && rep.f_residual < 1e-6 && b_err < 1e-8;

    // Translation identity on a generic simple flow.
    let x0 = random_initial(2, 2, 21);
    let grid = Grid::uniform(2, 0.0, 0.05, 6).unwrap();
    let flow3 = integrate_flow(&x0, &FlowConfig::new(DecompositionRule::Simple, 1e-3).with_grid(grid)).unwrap();
    let frames3 = integrate_frame(&flow3, &FrameOptions::new(1.0)).unwrap();
    let tl = translation_residual(&flow3, &frames3, &[0.1, 0.15]).unwrap();

    outcome(
        type1_ok && type1 < 1e-6 && type2_ok && tl < 1e-6,
        format!(
            "type I f-residual {type1:.3e}; type II {} with x-residual {:.3e}, f-residual {:.3e}, |B - exp(-P1 X_0)| {b_err:.3e}; translation {tl:.3e}",
            rep.kind.name(),
            rep.x_residual,
            rep.f_residual
        ),
    )
}

fn killing_consistency() -> Outcome {
    let mut worst = 0.0_f64;
    let mut points = 0;
    for (seed, rule) in [(30, DecompositionRule::Admissible), (31, DecompositionRule::Simple)] {
        let x0 = random_initial(2, 2, seed);
        let flow = integrate_flow(&x0, &FlowConfig::new(rule, 1e-3).with_grid(Grid::uniform(2, -0.2, 0.1, 5).unwrap())).unwrap();
        let frames = integrate_frame(&flow, &FrameOptions::new(0.8)).unwrap();
        for flat in 0..frames.grid.len() {
            worst = worst.max(killing_residual(&flow, &frames, &frames.grid.multi_index(flat)).unwrap());
            points += 1;
        }
    }
    outcome(worst < 1e-6, format!("max |X(t) - F^-1 X(0) F| = {worst:.3e} at z0 = 0.8 over {points} grid points"))
}

fn sphere_orthogonality() -> Outcome {
    let mut orth = 0.0_f64;
    let mut det = 0.0_f64;
    let mut sphere = 0.0_f64;
    let mut all = vec![clifford_run().0.clone()];
    for (seed, rule) in [(40, DecompositionRule::Admissible), (41, DecompositionRule::CurvedFlat)] {
        let x0 = random_initial(2, 2, seed);
        let flow = integrate_flow(&x0, &FlowConfig::new(rule, 1e-2).with_grid(Grid::uniform(2, -1.0, 0.05, 41).unwrap())).unwrap();
        all.push(integrate_frame(&flow, &FrameOptions::new(1.0)).unwrap());
    }
    for frames in &all {
        let (o, d, s) = frames.structure_defects();
        orth = orth.max(o);
        det = det.max(d);
        sphere = sphere.max(s);
    }
    outcome(orth < 1e-8 && det < 1e-8 && sphere < 1e-8, format!("|FᵀF - I| {orth:.3e}, |det F - 1| {det:.3e}, ||f| - 1| {sphere:.3e}"))
}

fn mu_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0_f64;
    let mut samples = 0;
    let mut seed = 0;
    while samples < 20 {
        let x0 = random_initial(3, 2, 100 + seed);
        seed += 1;
        let z: C64 = C64::from_polar(rng.gen_range(0.6..1.4), rng.gen_range(0.0..2.0 * PI));
        let mut ok = true;
        let mut local = 0.0_f64;
        for i in 1..=3 {
            match mu_eigenvalues(&x0, i, z) {
                Ok(s) => {
                    for p in &s.pairs {
                        let expected = z.powi(2 - 2 * i as i32) * p.w.powi(2 * i as i32 - 1);
                        local = local.max((p.mu - expected).norm());
                    }
                }
                Err(_) => ok = false,
            }
        }
        if ok {
            worst = worst.max(local);
            samples += 1;
        }
    }
    outcome(worst < 1e-8, format!("max |μ_i - z^(2-2i) w^(2i-1)| = {worst:.3e} over {samples} samples, i = 1..3"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("clifford golden", clifford_golden),
        ("connection formula", connection_formula),
        ("immersion determinant", immersion_determinant),
        ("isospectrality", isospectrality),
        ("norm conservation", norm_conservation),
        ("frobenius integrability", frobenius),
        ("flatness", flatness),
        ("ad-equivariance", ad_equivariance),
        ("quasiperiodicity", quasiperiodicity),
        ("frame/killing consistency", killing_consistency),
        ("sphere and orthogonality", sphere_orthogonality),
        ("mu formula", mu_formula),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<26} {} ({:.1} s) {}",
            k + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
