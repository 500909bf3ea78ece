//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;

use pdha_core::automaton::{
    build_rhs, discretize_model, Dspdha, FlowKind, FlowSpec, Guard, GuardDirection, InitialField,
    Mode, ModeDescription, ModelDescription, ResetKind, ResetRule, EventId, SourceTerm,
};
use pdha_core::executor::{
    integrate_step, simulate, structural_checks, Execution, Integrator, SimOptions, TransitionCause,
};
use pdha_core::mesh::{
    discretize_domain, DiscretePartition, DiscreteState, DiscretizationRecord, FieldValues,
    ModeId, RegionSpec, SpaceDomain,
};
use pdha_core::models::{
    heater_model, traffic_model, HeaterConfig, TrafficConfig, HEATER_OFF, HEATER_ON,
    TRAFFIC_CONGESTED, TRAFFIC_FREE,
};
use pdha_core::schemes::{
    order_reduce, second_difference, BoundaryCondition, Boundaries, LinearOperator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

/// Grid x of every unknown in the heater model, by index.
fn heater_x(a: &Dspdha) -> Vec<f64> {
    a.mesh.points().to_vec()
}

fn heater_run(cfg: &HeaterConfig, t_end: f64) -> Result<(Dspdha, Execution), String> {
    let a = heater_model(cfg).map_err(err)?;
    let (x, _) = simulate(&a, &SimOptions::new(0.01, Integrator::Euler, t_end)).map_err(err)?;
    Ok((a, x))
}

fn criterion_1() -> Outcome {
    let a = heater_model(&HeaterConfig::default()).map_err(err)?;
    let rhs = build_rhs(&a, &a.init, 0.0).map_err(err)?;
    let xs = heater_x(&a);
    let mut worst = 0.0f64;
    for (k, &x) in xs.iter().enumerate() {
        let i = x.round() as i64;
        // hand evaluation: (u_{i-1} - 2u_i + u_{i+1}) + (10 - i), ghosts are 0
        let left = if i == 1 { 0.0 } else { 0.2 };
        let right = if i == 9 { 0.0 } else { 0.2 };
        let expected = left - 0.4 + right + (10.0 - i as f64);
        worst = worst.max((rhs[k] - expected).abs());
        if (2..=8).contains(&i) {
            ensure((rhs[k] - (10.0 - i as f64)).abs() <= 1e-12, || {
                format!("i = {i}: got {}, want {}", rhs[k], 10 - i)
            })?;
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst}"))?;
    ensure((rhs[0] - 8.8).abs() <= 1e-12 && (rhs[8] - 0.8).abs() <= 1e-12, || {
        format!("ends {} / {}", rhs[0], rhs[8])
    })?;
    Ok(format!("interior 10 - i exact, ends {:.3} / {:.3}", rhs[0], rhs[8]))
}

fn criterion_2() -> Outcome {
    let (a, x) = heater_run(&HeaterConfig::default(), 50.0)?;
    let delta = 0.1;
    let xs = heater_x(&a);
    let mut entered = vec![false; xs.len()];
    let mut worst = String::new();
    for (_, _, s) in x.samples() {
        for (k, &u) in s.field.values().iter().enumerate() {
            let i = xs[k].round() as i64;
            if i == 1 || i == 9 {
                if !(-delta..=0.7 + delta).contains(&u) {
                    worst = format!("u_{i} = {u} at t = {}", s.t);
                }
            } else {
                if (0.4..=0.7).contains(&u) {
                    entered[k] = true;
                }
                if entered[k] && !(0.4 - delta..=0.7 + delta).contains(&u) {
                    worst = format!("u_{i} = {u} at t = {}", s.t);
                }
            }
        }
    }
    ensure(worst.is_empty(), || worst.clone())?;
    let interior_entered = (0..xs.len()).filter(|&k| entered[k]).count();
    Ok(format!("{interior_entered}/7 interior points entered [0.4, 0.7] and stayed within δ"))
}

fn switches_at(a: &Dspdha, x: &Execution, at: f64) -> usize {
    let k = a.mesh.index_of(at).expect("grid point");
    x.transitions.iter().filter(|t| t.event.indices.contains(&k)).count()
}

fn criterion_3() -> Outcome {
    let (a, x) = heater_run(&HeaterConfig::default(), 50.0)?;
    let fine = switches_at(&a, &x, 2.0);
    let coarse_cfg = HeaterConfig {
        h: 2.0,
        ..HeaterConfig::default()
    };
    let (b, y) = heater_run(&coarse_cfg, 50.0)?;
    ensure(b.mesh.len() == 4, || format!("h = 2 gives {} unknowns", b.mesh.len()))?;
    let coarse = switches_at(&b, &y, 2.0);
    let detail = format!("{fine} transitions at x = 2 with h = 1, {coarse} with h = 2");
    ensure(fine >= 3 && coarse >= 3, || detail.clone())?;
    Ok(detail)
}

fn cells(a: &Dspdha, s: &DiscreteState, pred: impl Fn(ModeId, f64) -> bool) -> Vec<i64> {
    let h = a.mesh.spacing();
    a.mesh
        .points()
        .iter()
        .zip(s.partition.modes().iter().zip(s.field.values()))
        .filter(|(_, (q, u))| pred(**q, **u))
        .map(|(x, _)| (x / h).round() as i64)
        .collect()
}

fn tenths(v: &[i64]) -> String {
    let parts: Vec<String> = v.iter().map(|c| format!("{:.1}", *c as f64 / 10.0)).collect();
    format!("{{{}}}", parts.join(", "))
}

fn traffic_run(t_end: f64) -> Result<(Dspdha, Execution), String> {
    let cfg = TrafficConfig::default();
    let a = traffic_model(&cfg).map_err(err)?;
    let (x, _) = simulate(&a, &cfg.sim_options(t_end)).map_err(err)?;
    Ok((a, x))
}

fn criterion_4() -> Outcome {
    let (a, x) = traffic_run(1.0)?;
    let s = x.final_state();
    let congested = cells(&a, &s, |q, _| q == TRAFFIC_CONGESTED);
    let forward = cells(&a, &s, |q, u| q == TRAFFIC_FREE && u != 0.0);
    ensure(congested == vec![0, 1, 2, 25, 26, 27], || {
        format!("congested {}", tenths(&congested))
    })?;
    let want = [69i64, 70];
    ensure(
        forward.len() == want.len() && forward.iter().zip(want).all(|(c, w)| (c - w).abs() <= 1),
        || format!("forward parcels {}", tenths(&forward)),
    )?;
    Ok(format!("congested {}, forward {}", tenths(&congested), tenths(&forward)))
}

fn criterion_5() -> Outcome {
    let (_, x) = traffic_run(2.0)?;
    let first = x
        .collisions
        .iter()
        .find(|c| c.from_mode == TRAFFIC_FREE && c.into_mode == TRAFFIC_CONGESTED)
        .ok_or("no free to congested merge")?;
    ensure((first.t - 0.5).abs() <= 0.2, || format!("first merge at t = {}", first.t))?;
    Ok(format!("first merge at t = {:.3}", first.t))
}

fn criterion_6() -> Outcome {
    let (a, x) = traffic_run(5.0)?;
    let at3 = x.state_at(3.0).ok_or("no state at t = 3")?;
    let congested = cells(&a, &at3, |q, _| q == TRAFFIC_CONGESTED);
    let want = [9i64, 10];
    let sym = congested.iter().filter(|c| !want.contains(c)).count()
        + want.iter().filter(|w| !congested.contains(w)).count();
    let occupied5 = cells(&a, &x.final_state(), |_, u| u != 0.0);
    ensure(sym <= 2, || {
        format!(
            "t = 3 congested {} vs {{0.9, 1.0}}: symmetric difference {sym}; t = 5 occupied {}",
            tenths(&congested),
            occupied5.len()
        )
    })?;
    ensure(occupied5.is_empty(), || format!("t = 5 occupied {}", tenths(&occupied5)))?;
    Ok(format!("t = 3 congested {}, t = 5 empty", tenths(&congested)))
}

fn random_automaton(rng: &mut ChaCha8Rng) -> Dspdha {
    let m = rng.gen_range(2..=8);
    let dom = SpaceDomain::new(0.0, rng.gen_range(0.5..4.0)).unwrap();
    let mesh = discretize_domain(dom, m).unwrap();
    let mut bc = || {
        if rng.gen_bool(0.5) {
            BoundaryCondition::Mirror
        } else {
            BoundaryCondition::Dirichlet(rng.gen_range(-1.0..1.0))
        }
    };
    let boundaries = Boundaries {
        left: bc(),
        right: bc(),
    };
    let mode = |name: &str, rng: &mut ChaCha8Rng| Mode {
        name: name.into(),
        flow: FlowSpec {
            kind: FlowKind::Diffusion {
                alpha: rng.gen_range(0.05..1.0),
            },
            source: SourceTerm::AffineInX {
                slope: rng.gen_range(-1.0..1.0),
                intercept: rng.gen_range(-1.5..1.5),
            },
            boundaries,
        },
        invariant: None,
    };
    let modes = vec![mode("a", rng), mode("b", rng)];
    let lo = rng.gen_range(-0.5..0.5);
    let hi = lo + rng.gen_range(0.05..0.8);
    let partition = DiscretePartition::new(
        (0..m).map(|_| ModeId(rng.gen_range(0..2))).collect(),
    );
    let field = FieldValues::new((0..m).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let h = mesh.spacing();
    Dspdha {
        modes,
        events: vec!["up".into(), "down".into()],
        guards: vec![
            Guard {
                source: ModeId(0),
                event: EventId(0),
                direction: GuardDirection::Rising,
                threshold: hi,
                target: ModeId(1),
            },
            Guard {
                source: ModeId(1),
                event: EventId(1),
                direction: GuardDirection::Falling,
                threshold: lo,
                target: ModeId(0),
            },
        ],
        resets: vec![
            ResetRule {
                mode: ModeId(0),
                event: EventId(0),
                kind: ResetKind::Identity,
            },
            ResetRule {
                mode: ModeId(1),
                event: EventId(1),
                kind: ResetKind::Identity,
            },
        ],
        init: DiscreteState::new(partition, field).unwrap(),
        mesh,
        record: DiscretizationRecord {
            scheme_name: "second_central".into(),
            h,
            m,
            source_model: "random".into(),
        },
        merge_rule: None,
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut events = 0usize;
    let mut worst = 0.0f64;
    for n in 0..100 {
        let a = random_automaton(&mut rng);
        let alpha = a.max_alpha();
        let h = a.mesh.spacing();
        let dt = 0.4 * h * h / (2.0 * alpha);
        let t_end = rng.gen_range(0.5..3.0);
        let integrator = if n % 2 == 0 { Integrator::Euler } else { Integrator::Rk4 };
        let opts = SimOptions::new(dt, integrator, t_end);
        let (x, _) = simulate(&a, &opts).map_err(|e| format!("automaton {n}: {e}"))?;
        let problems = x.verify(&a);
        ensure(problems.is_empty(), || format!("automaton {n}: {problems:?}"))?;
        ensure(x.trajectory().is_well_formed(), || format!("automaton {n}: bad trajectory"))?;
        ensure(x.end_time() == t_end || !x.last_closed, || {
            format!("automaton {n}: ends at {} not {t_end}", x.end_time())
        })?;
        for (k, tr) in x.transitions.iter().enumerate() {
            if tr.cause != TransitionCause::Crossing {
                continue;
            }
            let pre = x.intervals[k].last_state();
            for &i in &tr.event.indices {
                let g = a
                    .guards_from(pre.partition.get(i))
                    .find(|g| g.event == tr.event.id)
                    .ok_or_else(|| format!("automaton {n}: no guard for transition {k}"))?;
                let gap = (pre.field.values()[i] - g.threshold).abs();
                worst = worst.max(gap);
                events += 1;
            }
        }
        let (again, _) = simulate(&a, &opts).map_err(err)?;
        ensure(again == x, || format!("automaton {n}: rerun differs"))?;
    }
    ensure(worst <= 1e-6, || format!("localized event off threshold by {worst}"))?;
    ensure(events > 0, || "no localized events were exercised".into())?;
    Ok(format!("100 automata, {events} localized events, max |u - thr| = {worst:.1e}"))
}

fn single_mode_diffusion(bc: BoundaryCondition, init: InitialField, lower: f64, upper: f64, m: usize) -> Dspdha {
    let domain = SpaceDomain::new(lower, upper).unwrap();
    let model = ModelDescription {
        name: "rod".into(),
        domain,
        modes: vec![ModeDescription {
            name: "rod".into(),
            kind: FlowKind::Diffusion { alpha: 1.0 },
            source: SourceTerm::Zero,
            invariant: None,
        }],
        events: vec![],
        boundaries: Boundaries::both(bc),
        regions: RegionSpec::single(domain, ModeId(0)),
        init,
        guards: vec![],
        resets: vec![],
        merge_rule: None,
    };
    discretize_model(&model, m).unwrap()
}

fn criterion_8() -> Outcome {
    // conservation with mirror ends
    let bump = InitialField::Samples(vec![(0.0, 0.0), (0.3, 1.0), (0.5, 0.2), (1.0, 0.7)]);
    let a = single_mode_diffusion(BoundaryCondition::Mirror, bump.clone(), 0.0, 1.0, 20);
    let h = a.mesh.spacing();
    let (x, _) = simulate(&a, &SimOptions::new(0.45 * h * h, Integrator::Euler, 10.0)).map_err(err)?;
    let total0: f64 = a.init.field.values().iter().sum();
    let drift = x
        .samples()
        .map(|(_, _, s)| (s.field.values().iter().sum::<f64>() - total0).abs() / total0.abs())
        .fold(0.0f64, f64::max);
    ensure(drift <= 1e-10, || format!("mirror sum drift {drift}"))?;

    // maximum principle with zero Dirichlet ends
    let b = single_mode_diffusion(BoundaryCondition::Dirichlet(0.0), bump, 0.0, 1.0, 20);
    let h = b.mesh.spacing();
    let (y, _) = simulate(&b, &SimOptions::new(0.45 * h * h, Integrator::Euler, 1.0)).map_err(err)?;
    let norms: Vec<f64> = y
        .samples()
        .map(|(_, _, s)| s.field.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    ensure(norms.windows(2).all(|w| w[1] <= w[0]), || "max norm increased".into())?;

    // one unknown between zero ghosts, h = 1: u' = -2u
    let decay = |s: &DiscreteState, _t: f64| -> Vec<f64> {
        s.field.values().iter().map(|u| 0.0 - 2.0 * u + 0.0).collect()
    };
    let mut cell = DiscreteState::new(DiscretePartition::uniform(ModeId(0), 1), FieldValues::new(vec![1.0]))
        .map_err(err)?;
    for k in 0..10 {
        cell.field = integrate_step(decay, &cell, k as f64 * 0.1, 0.1, Integrator::Rk4).map_err(err)?;
    }
    let decay_err = (cell.field.values()[0] - (-2.0f64).exp()).abs();
    ensure(decay_err <= 1e-5, || format!("rk4 decay error {decay_err}"))?;

    // exact on quadratics
    for h in [1.0, 0.5, 0.1] {
        let n = 12;
        let xs: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
        let u = FieldValues::new(xs.iter().map(|x| x * x - 3.0 * x + 0.5).collect());
        let ghost = |x: f64| x * x - 3.0 * x + 0.5;
        let bc = Boundaries {
            left: BoundaryCondition::Dirichlet(ghost(0.0)),
            right: BoundaryCondition::Dirichlet(ghost((n + 1) as f64 * h)),
        };
        let d = second_difference(&u, h, bc).map_err(err)?;
        let worst = d.iter().map(|v| (v - 2.0).abs()).fold(0.0f64, f64::max);
        ensure(worst <= 1e-9, || format!("h = {h}: quadratic off by {worst}"))?;
    }
    Ok(format!("sum drift {drift:.1e}, rk4 error {decay_err:.1e}"))
}

fn criterion_9() -> Outcome {
    for n in 1..=3 {
        let sys = order_reduce(n, ()).map_err(err)?;
        ensure(sys.equations().len() == n, || format!("order {n}: {} equations", sys.equations().len()))?;
    }
    let wave = order_reduce(2, LinearOperator { uxx: 1.0, ux: 0.0, u: 0.0 }).map_err(err)?;
    for m in [2usize, 5, 17] {
        let mesh = discretize_domain(SpaceDomain::new(0.0, 1.0).unwrap(), m).unwrap();
        let semi = wave
            .semi_discretize(&mesh, Boundaries::both(BoundaryCondition::Dirichlet(0.0)))
            .map_err(err)?;
        ensure(semi.dimension() == 2 * m, || format!("m = {m}: {} ODEs", semi.dimension()))?;
        ensure(wave.scalar_ode_count(m) == 2 * m, || "scalar count".into())?;
    }
    let a = heater_model(&HeaterConfig::default()).map_err(err)?;
    let r = structural_checks(&a);
    ensure(r.deterministic_sufficient && r.nonblocking_sufficient, || format!("{r:?}"))?;
    ensure(a.mode_name(HEATER_ON) == "ON" && a.mode_name(HEATER_OFF) == "OFF", || "mode names".into())?;
    Ok("order reduction and heater structure hold".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("heater initial derivatives", criterion_1),
        ("heater invariant regions", criterion_2),
        ("heater switching at x = 2", criterion_3),
        ("traffic t = 1 snapshot", criterion_4),
        ("traffic merge time", criterion_5),
        ("traffic t = 3 and t = 5 snapshots", criterion_6),
        ("execution semantics", criterion_7),
        ("numerical properties", criterion_8),
        ("structure", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
