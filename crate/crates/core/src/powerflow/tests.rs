use proptest::prelude::*;

use super::*;

fn two_bus(r_ohm: f64, x_ohm: f64, kv: f64, rating: f64) -> FeederNetwork {
    FeederNetwork::new(
        1000.0,
        1.0,
        vec![
            Bus { id: "src".into(), kv, slack: true },
            Bus { id: "load".into(), kv, slack: false },
        ],
        vec![Branch {
            id: "ln".into(),
            from: "src".into(),
            to: "load".into(),
            r_ohm,
            x_ohm,
            rating_kva: rating,
            kind: BranchKind::Line,
        }],
        vec![],
    )
    .unwrap()
}

/// Closed-form receiving-end voltage for a single branch feeding a
/// constant-PQ load, used as the independent oracle for the sweep.
fn two_bus_closed_form(v1_pu: f64, p_kw: f64, q_kvar: f64, r_ohm: f64, x_ohm: f64, kv: f64, s_base: f64) -> f64 {
    let z_base = kv * kv * 1000.0 / s_base;
    let (r, x) = (r_ohm / z_base, x_ohm / z_base);
    let (p, q) = (p_kw / s_base, q_kvar / s_base);
    // |V2|⁴ + (2(rP + xQ) − V1²)|V2|² + (r² + x²)(P² + Q²) = 0
    let b = 2.0 * (r * p + x * q) - v1_pu * v1_pu;
    let c = (r * r + x * x) * (p * p + q * q);
    let disc = b * b - 4.0 * c;
    assert!(disc >= 0.0, "no feasible voltage");
    (0.5 * (-b + disc.sqrt())).sqrt()
}

#[test]
fn unloaded_feeder_is_flat() {
    let net = two_bus(0.5, 1.2, 12.47, 1000.0);
    let res = solve_load_flow(&net, &[(0.0, 0.0), (0.0, 0.0)]).unwrap();
    assert_eq!(res.v_pu, vec![1.0, 1.0]);
    assert_eq!(res.loading_pct, vec![0.0]);
    assert!(res.slack_p_kw.abs() < 1e-9);
}

#[test]
fn two_bus_matches_closed_form() {
    let net = two_bus(0.1, 0.2, 12.0, 2000.0);
    let res = solve_load_flow(&net, &[(0.0, 0.0), (1000.0, 300.0)]).unwrap();
    let expect = two_bus_closed_form(1.0, 1000.0, 300.0, 0.1, 0.2, 12.0, 1000.0);
    assert!((res.v_pu[1] - expect).abs() < 1e-8, "{} vs {}", res.v_pu[1], expect);
}

#[test]
fn power_balance_at_convergence() {
    let net = FeederNetwork::new(
        1000.0,
        1.0,
        vec![
            Bus { id: "s".into(), kv: 12.47, slack: true },
            Bus { id: "a".into(), kv: 12.47, slack: false },
            Bus { id: "b".into(), kv: 12.47, slack: false },
            Bus { id: "c".into(), kv: 12.47, slack: false },
        ],
        vec![
            Branch { id: "l1".into(), from: "s".into(), to: "a".into(), r_ohm: 1.0, x_ohm: 2.5, rating_kva: 3000.0, kind: BranchKind::Line },
            Branch { id: "l2".into(), from: "a".into(), to: "b".into(), r_ohm: 0.8, x_ohm: 1.5, rating_kva: 1500.0, kind: BranchKind::Line },
            Branch { id: "l3".into(), from: "a".into(), to: "c".into(), r_ohm: 1.2, x_ohm: 2.0, rating_kva: 1500.0, kind: BranchKind::Line },
        ],
        vec![],
    )
    .unwrap();
    let inj = [(0.0, 0.0), (400.0, 120.0), (600.0, 200.0), (350.0, 80.0)];
    let res = solve_load_flow(&net, &inj).unwrap();

    // Recompute losses from the solved voltages: sum of S_send - S_recv.
    let total_load_p: f64 = inj.iter().map(|i| i.0).sum();
    let total_load_q: f64 = inj.iter().map(|i| i.1).sum();
    // Slack covers load plus I²R / I²X losses.
    assert!(res.slack_p_kw > total_load_p);
    assert!(res.slack_q_kvar > total_load_q);
    let losses_p = res.slack_p_kw - total_load_p;
    let losses_q = res.slack_q_kvar - total_load_q;
    // Independent loss estimate from branch currents.
    let z_base = 12.47 * 12.47 * 1000.0 / 1000.0;
    let mut est_p = 0.0;
    let mut est_q = 0.0;
    for (bi, br) in net.branches.iter().enumerate() {
        let i_pu = res.branch_kva[bi] / 1000.0
            / res.v_pu[net.bus_index(if br.from == "s" || br.from == "a" { &br.from } else { &br.to }).unwrap()];
        est_p += i_pu * i_pu * (br.r_ohm / z_base) * 1000.0;
        est_q += i_pu * i_pu * (br.x_ohm / z_base) * 1000.0;
    }
    assert!((losses_p - est_p).abs() <= 1e-6 * est_p.max(1.0), "{losses_p} vs {est_p}");
    assert!((losses_q - est_q).abs() <= 1e-6 * est_q.max(1.0), "{losses_q} vs {est_q}");
}

#[test]
fn downstream_voltage_monotone_for_inductive_loads() {
    let net = FeederNetwork::new(
        1000.0,
        1.0,
        vec![
            Bus { id: "s".into(), kv: 12.47, slack: true },
            Bus { id: "a".into(), kv: 12.47, slack: false },
            Bus { id: "b".into(), kv: 12.47, slack: false },
        ],
        vec![
            Branch { id: "l1".into(), from: "s".into(), to: "a".into(), r_ohm: 1.0, x_ohm: 2.0, rating_kva: 2000.0, kind: BranchKind::Line },
            Branch { id: "l2".into(), from: "a".into(), to: "b".into(), r_ohm: 1.0, x_ohm: 2.0, rating_kva: 2000.0, kind: BranchKind::Line },
        ],
        vec![],
    )
    .unwrap();
    let res = solve_load_flow(&net, &[(0.0, 0.0), (300.0, 100.0), (200.0, 60.0)]).unwrap();
    assert!(res.v_pu[0] >= res.v_pu[1]);
    assert!(res.v_pu[1] >= res.v_pu[2]);
}

#[test]
fn non_tree_topologies_rejected() {
    // A loop: 3 buses, 3 branches.
    let err = FeederNetwork::new(
        1000.0,
        1.0,
        vec![
            Bus { id: "s".into(), kv: 12.47, slack: true },
            Bus { id: "a".into(), kv: 12.47, slack: false },
            Bus { id: "b".into(), kv: 12.47, slack: false },
        ],
        vec![
            Branch { id: "l1".into(), from: "s".into(), to: "a".into(), r_ohm: 1.0, x_ohm: 1.0, rating_kva: 100.0, kind: BranchKind::Line },
            Branch { id: "l2".into(), from: "a".into(), to: "b".into(), r_ohm: 1.0, x_ohm: 1.0, rating_kva: 100.0, kind: BranchKind::Line },
            Branch { id: "l3".into(), from: "b".into(), to: "s".into(), r_ohm: 1.0, x_ohm: 1.0, rating_kva: 100.0, kind: BranchKind::Line },
        ],
        vec![],
    );
    assert!(err.is_err());
}

#[test]
fn loading_report_sorted_desc_ties_by_id() {
    let net = FeederNetwork::new(
        1000.0,
        1.0,
        vec![
            Bus { id: "s".into(), kv: 12.47, slack: true },
            Bus { id: "a".into(), kv: 12.47, slack: false },
            Bus { id: "b".into(), kv: 12.47, slack: false },
        ],
        vec![
            Branch { id: "zz".into(), from: "s".into(), to: "a".into(), r_ohm: 0.0, x_ohm: 0.1, rating_kva: 100.0, kind: BranchKind::Line },
            Branch { id: "aa".into(), from: "a".into(), to: "b".into(), r_ohm: 0.0, x_ohm: 0.1, rating_kva: 100.0, kind: BranchKind::Line },
        ],
        vec![],
    )
    .unwrap();
    let res = solve_load_flow(&net, &[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]).unwrap();
    let report = loading_report(&net, &res);
    // All zero: tie broken by id.
    assert_eq!(report[0].0, "aa");
    assert_eq!(report[1].0, "zz");

    let res = solve_load_flow(&net, &[(0.0, 0.0), (0.0, 0.0), (50.0, 0.0)]).unwrap();
    let report = loading_report(&net, &res);
    // Both branches carry the same flow; with equal ratings the upstream one
    // carries slightly more (losses), so it sorts first.
    assert!(report[0].1 >= report[1].1);
}

#[test]
fn volt_drop_zero_flow_identity() {
    let u2 = volt_drop_forward(1.0, 0.0, 0.0, 0.5, 2.0, 12.47).unwrap();
    assert!((u2 - 1.0).abs() < 1e-12);
}

#[test]
fn volt_drop_round_trip_q() {
    // Series path impedances summed over a three-element chain.
    let (r, x) = (0.35 + 0.18 + 0.22, 1.9 + 0.41 + 0.5);
    let kv = 12.47;
    let p = 310.0;
    for q_true in [-180.0, -40.0, 25.0, 160.0] {
        let u2 = volt_drop_forward(1.0, p, q_true, r, x, kv).unwrap();
        let q_solved = solve_q_for_target(1.0, u2, p, r, x, kv).unwrap();
        assert!((q_solved - q_true).abs() < 1e-9 * q_true.abs().max(1.0), "{q_solved} vs {q_true}");
    }
}

#[test]
fn volt_drop_unreachable_target() {
    // Target far above the source with negligible reactance.
    let err = solve_q_for_target(1.0, 1.5, 100.0, 0.01, 1e-6, 12.47);
    assert!(matches!(err, Err(VoltVarError::Unreachable)));
}

#[test]
fn parse_network_round_trip() {
    let text = r#"
[network]
s_base_kva = 1000.0

[[bus]]
id = "s"
kv = 12.47
slack = true

[[bus]]
id = "a"
kv = 12.47

[[branch]]
id = "l1"
from = "s"
to = "a"
r_ohm = 0.4
x_ohm = 1.1
rating_kva = 800.0
kind = "transformer"

[[injection]]
bus = "a"
p_kw = 120.0
q_kvar = 35.0
"#;
    let net = parse_network(text, "inline").unwrap();
    assert_eq!(net.buses.len(), 2);
    assert_eq!(net.branches[0].kind, BranchKind::Transformer);
    assert_eq!(net.base_injections[1], (120.0, 35.0));
    assert!(parse_network("[network]\n", "inline").is_err());
}

proptest! {
    /// Scaling all impedances and ratings by alpha with fixed pu injections
    /// leaves pu voltages unchanged.
    #[test]
    fn impedance_scaling_invariance(
        alpha in 0.2_f64..5.0,
        p in 0.0_f64..800.0,
        q in -200.0_f64..300.0,
    ) {
        let base = two_bus(0.4, 1.0, 12.47, 1000.0);
        let scaled = {
            let mut n = two_bus(0.4 * alpha, 1.0 * alpha, 12.47, 1000.0 * alpha);
            // Holding pu injections fixed while impedances grow by alpha
            // means the power base shrinks by alpha.
            n.s_base_kva = 1000.0 / alpha;
            n
        };
        let r1 = solve_load_flow(&base, &[(0.0, 0.0), (p, q)]).unwrap();
        let r2 = solve_load_flow(&scaled, &[(0.0, 0.0), (p / alpha, q / alpha)]).unwrap();
        prop_assert!((r1.v_pu[1] - r2.v_pu[1]).abs() < 1e-9);
    }
}
