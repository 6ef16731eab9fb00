use hytest::conditions::gen_test_conditions;
use hytest::graph::build_condition_graph;
use hytest::model::{parse_hybrid_model, parse_sim_model};
use hytest::mutation::{bundled_operators, gen_mutants};
use hytest::oracle::{run_suite, OracleOptions};
use hytest::sim::{parse_sim_config, CompiledSimModel};
use hytest::testgen::{generate_suite, GenOptions};

#[derive(Clone, Copy, Debug)]
struct Design {
    g_grav: f64,
    g_react_k: f64, // gain_react block value; reaction = g_react_k * g_grav * sin(th)
    g_sat: f64,
    g_lin: f64,
    dist: f64,
    t_end: f64,
    p1: [f64; 4],
    p2: [f64; 4],
}

fn hybrid_json(d: &Design) -> String {
    let (g, rk, s, l, dd) = (d.g_grav, d.g_react_k, d.g_sat, d.g_lin, d.dist);
    let r = rk * g;
    format!(r#"{{
  "variables": [
    {{"name": "th", "lo": -1.5, "hi": 1.5, "precision": 0.25}},
    {{"name": "thd", "lo": -2.0, "hi": 2.0, "precision": 0.5}},
    {{"name": "x", "lo": -3.0, "hi": 3.0, "precision": 1.0}},
    {{"name": "xd", "lo": -3.0, "hi": 3.0, "precision": 1.0}}
  ],
  "constants": {{"u_max": 1.0, "dist": {dd}}},
  "aux": [{{"name": "z", "params": ["th", "thd"], "body": "th + thd"}}],
  "modes": [
    {{"name": "max_left", "invariant": "z(th,thd) < -u_max",
      "flows": {{"th": "thd", "thd": "{g}*sin(th) + {s} + dist", "x": "xd",
                 "xd": "-{s} - {r}*sin(th) - xd"}}}},
    {{"name": "max_right", "invariant": "z(th,thd) > u_max",
      "flows": {{"th": "thd", "thd": "{g}*sin(th) - {s} + dist", "x": "xd",
                 "xd": "{s} - {r}*sin(th) - xd"}}}},
    {{"name": "stabilize", "invariant": "abs(z(th,thd)) < u_max",
      "flows": {{"th": "thd", "thd": "{g}*sin(th) - {l}*z(th,thd) + dist", "x": "xd",
                 "xd": "{l}*z(th,thd) - {r}*sin(th) - xd"}}}}
  ],
  "transitions": [
    {{"src": "max_left", "dst": "max_right", "guard": "z(th,thd) > u_max"}},
    {{"src": "max_right", "dst": "max_left", "guard": "z(th,thd) < -u_max"}},
    {{"src": "max_left", "dst": "stabilize", "guard": "abs(z(th,thd)) < u_max"}},
    {{"src": "max_right", "dst": "stabilize", "guard": "abs(z(th,thd)) < u_max"}},
    {{"src": "stabilize", "dst": "max_left", "guard": "z(th,thd) < -u_max"}},
    {{"src": "stabilize", "dst": "max_right", "guard": "z(th,thd) > u_max"}}
  ],
  "goal": {{"final_modes": ["stabilize"]}},
  "unacceptable": ["abs(x) > 3"]
}}"#)
}

fn sim_json(d: &Design) -> String {
    format!(r#"{{
  "blocks": [
    {{"id": "th", "kind": "integrator", "params": {{"init": 0.0}}, "inputs": ["thd"]}},
    {{"id": "thd", "kind": "integrator", "params": {{"init": 0.0}}, "inputs": ["sum_thdd"]}},
    {{"id": "x", "kind": "integrator", "params": {{"init": 0.0}}, "inputs": ["xd"]}},
    {{"id": "xd", "kind": "integrator", "params": {{"init": 0.0}}, "inputs": ["sum_xdd"]}},
    {{"id": "sin_th", "kind": "trig", "params": {{"fn": "sin"}}, "inputs": ["th"]}},
    {{"id": "gain_grav", "kind": "gain", "params": {{"gain": {g}}}, "inputs": ["sin_th"]}},
    {{"id": "gain_react", "kind": "gain", "params": {{"gain": {rk}}}, "inputs": ["gain_grav"]}},
    {{"id": "sum_z", "kind": "sum", "params": {{"signs": "++"}}, "inputs": ["th", "thd"], "controller": true}},
    {{"id": "c_max", "kind": "constant", "params": {{"value": 1.0}}, "controller": true}},
    {{"id": "c_min", "kind": "constant", "params": {{"value": -1.0}}, "controller": true}},
    {{"id": "rel_hi", "kind": "relational", "params": {{"op": ">"}}, "inputs": ["sum_z", "c_max"], "controller": true}},
    {{"id": "rel_lo", "kind": "relational", "params": {{"op": "<"}}, "inputs": ["sum_z", "c_min"], "controller": true}},
    {{"id": "log_or", "kind": "logical", "params": {{"op": "or"}}, "inputs": ["rel_hi", "rel_lo"], "controller": true}},
    {{"id": "sw_side", "kind": "switch", "params": {{}}, "inputs": ["c_max", "rel_hi", "c_min"], "controller": true}},
    {{"id": "gain_sat", "kind": "gain", "params": {{"gain": {s}}}, "inputs": ["sw_side"], "controller": true}},
    {{"id": "gain_lin", "kind": "gain", "params": {{"gain": {l}}}, "inputs": ["sum_z"], "controller": true}},
    {{"id": "sw_u", "kind": "switch", "params": {{}}, "inputs": ["gain_sat", "log_or", "gain_lin"], "controller": true}},
    {{"id": "sum_thdd", "kind": "sum", "params": {{"signs": "-++"}}, "inputs": ["sw_u", "gain_grav", "dist"]}},
    {{"id": "sum_xdd", "kind": "sum", "params": {{"signs": "+--"}}, "inputs": ["sw_u", "gain_react", "xd"]}}
  ],
  "inputs_external": ["dist"],
  "outputs": ["th", "thd", "x", "xd"]
}}"#, g = d.g_grav, rk = d.g_react_k, s = d.g_sat, l = d.g_lin)
}

fn cfg_json(d: &Design) -> String {
    format!(
        r#"{{"dt": 0.001, "sample_time": 0.01, "t_end": {t},
            "init": {{"th": {}, "thd": {}, "x": {}, "xd": {}, "dist": {dd}}},
            "plant_init": {{"th": {}, "thd": {}, "x": {}, "xd": {}}}}}"#,
        d.p1[0], d.p1[1], d.p1[2], d.p1[3], d.p2[0], d.p2[1], d.p2[2], d.p2[3],
        t = d.t_end, dd = d.dist
    )
}

fn evaluate(d: &Design, verbose: bool) -> Option<(usize, usize, Vec<String>)> {
    let hybrid = parse_hybrid_model(&hybrid_json(d)).expect("hybrid");
    let sim_model = parse_sim_model(&sim_json(d)).expect("sim");
    let cfg = parse_sim_config(&cfg_json(d)).expect("cfg");
    let graph = build_condition_graph(&hybrid, Some(hybrid.unacceptable.clone())).unwrap();
    let conditions = gen_test_conditions(&graph).unwrap();
    let (suite, _meta) = match generate_suite(
        &hybrid, &conditions, &sim_model, &cfg, &GenOptions::default(),
    ) {
        Ok(x) => x,
        Err(e) => {
            if verbose { println!("  gen failed: {e}"); }
            return None;
        }
    };
    let mutants = gen_mutants(&sim_model, &bundled_operators());
    let faulty: Vec<(String, hytest::SimModel)> =
        mutants.iter().map(|m| (m.name(), m.model.clone())).collect();
    let report = run_suite(
        &sim_model, &faulty, &suite, &hybrid, &graph, &conditions, &cfg,
        &OracleOptions::default(),
    )
    .ok()?;
    // reference must pass at least one case; and no defects anywhere
    if report.defect_count > 0 {
        if verbose { println!("  defects present"); }
        return None;
    }
    // Non-equivalence: any trace difference > 1e-6 on any suite case.
    let ref_compiled = CompiledSimModel::new(&sim_model, false, cfg.eps_eq).unwrap();
    let ref_traces: Vec<_> = suite
        .cases
        .iter()
        .map(|c| ref_compiled.simulate(&cfg, Some(&c.assignment(&suite.variables))).ok())
        .collect();
    let mut revealed = 0;
    let mut noneq = 0;
    let mut escapes = Vec::new();
    for (mu, rep) in mutants.iter().zip(&report.faulty) {
        let mc = CompiledSimModel::new(&mu.model, false, cfg.eps_eq).unwrap();
        let mut differs = false;
        for (case, rt) in suite.cases.iter().zip(&ref_traces) {
            let mt = mc.simulate(&cfg, Some(&case.assignment(&suite.variables)));
            match (rt, mt) {
                (Some(r), Ok(m)) => {
                    if r.max_abs_difference(&m).map(|d| d > 1e-6).unwrap_or(true) {
                        differs = true;
                    }
                }
                (None, Err(_)) => {}
                _ => differs = true,
            }
            if differs { break; }
        }
        if differs {
            noneq += 1;
            if rep.revealed { revealed += 1; } else { escapes.push(mu.name()); }
        }
    }
    if verbose {
        println!(
            "  suite={} cases, mutants={}, revealed(all)={}, noneq={noneq}, rev(noneq)={revealed}, esc={escapes:?}",
            suite.len(), mutants.len(), report.revealed_count
        );
        for case in &suite.cases {
            println!("    case {:?} class {:?} cond {:?}", case.inputs, case.initial_class, case.condition_id);
        }
        let ref_fails: Vec<usize> = report.reference.outcomes.iter().enumerate()
            .filter(|(_, o)| !o.is_passed()).map(|(i, _)| i).collect();
        println!("    ref fails cases {ref_fails:?}");
    }
    Some((revealed, noneq, escapes))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cand = Design {
        g_grav: 2.559169070063527, g_react_k: 0.9627188184455324,
        g_sat: 1.02204213778659, g_lin: 2.812528174453493,
        dist: -0.25890848533328603, t_end: 15.0,
        p1: [0.1, 0.0, 0.0, 0.0],
        p2: [-1.5454876999566662, 3.2128576709933587, -1.256655777815471, -1.4391884218759674],
    };
    if args.len() > 1 && args[1] == "one" {
        let (rev, neq, esc) = evaluate(&cand, true).expect("ref must pass");
        println!("rev {rev}/{neq} esc={esc:?}");
        return;
    }
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let mut rng: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let mut next = move || {
        rng ^= rng << 13; rng ^= rng >> 7; rng ^= rng << 17;
        (rng >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut center = cand;
    let mut center_score = (-99i32, 0usize);
    for i in 0..iters {
        let jitter = |v: f64, rel: f64, next: &mut dyn FnMut() -> f64| v * (1.0 + rel * (2.0 * next() - 1.0));
        let d = Design {
            g_grav: jitter(center.g_grav, 0.06, &mut next),
            g_react_k: jitter(center.g_react_k, 0.12, &mut next),
            g_sat: jitter(center.g_sat, 0.12, &mut next),
            g_lin: jitter(center.g_lin, 0.05, &mut next),
            dist: center.dist + 0.1 * (2.0 * next() - 1.0),
            t_end: 15.0,
            p1: center.p1,
            p2: [
                jitter(center.p2[0], 0.08, &mut next),
                jitter(center.p2[1], 0.08, &mut next),
                center.p2[2] + 0.3 * (2.0 * next() - 1.0),
                center.p2[3] + 0.3 * (2.0 * next() - 1.0),
            ],
        };
        if let Some((rev, neq, esc)) = evaluate(&d, false) {
            let need = (0.9 * neq as f64).ceil() as usize;
            let slack = rev as i32 - need as i32;
            let score = (slack, rev);
            if score > center_score {
                center_score = score;
                center = d;
                println!("i={i} slack={slack} rev {rev}/{neq} esc={esc:?}");
                println!("  {d:?}");
                if slack >= 1 { println!("TARGET reached with slack"); }
            }
        }
    }
    println!("final center: {center:?} score {center_score:?}");
}
