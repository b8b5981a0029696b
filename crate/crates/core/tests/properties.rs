use dmccs::combinatorics::{all_leader_masks, distinct_demand, LeaderGroup};
use dmccs::rate::{rate_ccs_demand, rate_lb_demand, rate_mccs_demand, rate_mccs_demand_with_leaders};
use dmccs::{average_rate, build_catalog, DemandScenario, FileCatalog, Scheme, UserPopulation};
use proptest::prelude::*;

fn catalog_strategy(max_files: usize) -> impl Strategy<Value = FileCatalog> {
    (1..=max_files)
        .prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n), prop::collection::vec(0.1f64..3.0, n)))
        .prop_map(|(w, f)| {
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            build_catalog(&p, &f).unwrap().0
        })
}

fn with_placement(c: FileCatalog) -> impl Strategy<Value = (FileCatalog, Vec<f64>)> {
    let n = c.n_files();
    (Just(c), prop::collection::vec(0.0f64..=1.0, n))
}

/// Demand vectors over `a` users, in lexicographic order.
fn all_demands(n: usize, a: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..a {
        out = out.into_iter().flat_map(|d| (0..n).map(move |f| [d.clone(), vec![f]].concat())).collect();
    }
    out
}

/// Average D-MCCS load from first principles: every activity pattern, every
/// demand vector, every subset that contains a first requester, each message
/// as long as its longest subfile.
fn brute_force_rate(q: &[f64], c: &FileCatalog, activity: &[f64]) -> f64 {
    let k = activity.len();
    let (p, f) = (c.popularity(), c.sizes());
    let mut total = 0.0;
    for pattern in 0..1usize << k {
        let active: Vec<usize> = (0..k).filter(|u| pattern >> u & 1 == 1).collect();
        let pr: f64 = (0..k).map(|u| if pattern >> u & 1 == 1 { activity[u] } else { 1.0 - activity[u] }).product();
        let a = active.len();
        for d in all_demands(c.n_files(), a) {
            let weight: f64 = d.iter().map(|&n| p[n]).product();
            let first: Vec<bool> = (0..a).map(|i| !d[..i].contains(&d[i])).collect();
            let mut load = 0.0;
            for s in 1..1usize << a {
                let members: Vec<usize> = (0..a).filter(|i| s >> i & 1 == 1).collect();
                if !members.iter().any(|&i| first[i]) {
                    continue;
                }
                let size = members.len() as i32;
                load += members
                    .iter()
                    .map(|&i| q[d[i]].powi(size - 1) * (1.0 - q[d[i]]).powi(a as i32 - size + 1) * f[d[i]])
                    .fold(0.0, f64::max);
            }
            total += pr * weight * load;
        }
    }
    total
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_rate_matches_brute_force(
        (c, q) in catalog_strategy(3).prop_flat_map(with_placement),
        activity in prop::collection::vec(0.0f64..=1.0, 1..=3),
    ) {
        let users = UserPopulation::new(activity.clone()).unwrap();
        let got = average_rate(Scheme::Dmccs, &q, &c, &users).unwrap().average_rate;
        let want = brute_force_rate(&q, &c, &activity);
        prop_assert!(rel_close(got, want, 1e-10), "{got} vs {want}");
    }

    #[test]
    fn per_scenario_sandwich(
        (c, q) in catalog_strategy(4).prop_flat_map(with_placement),
        demands in prop::collection::vec(0usize..4, 1..=4),
    ) {
        let demands: Vec<usize> = demands.into_iter().map(|d| d % c.n_files()).collect();
        let a = demands.len();
        let d = DemandScenario::with_users_in_order(demands, c.n_files()).unwrap();
        let lb = rate_lb_demand(&distinct_demand(&d), &q, &c, a).unwrap();
        let mccs = rate_mccs_demand(&d, &q, &c);
        let ccs = rate_ccs_demand(&d, &q, &c);
        prop_assert!(lb <= mccs * (1.0 + 1e-12) + 1e-15, "lb {lb} > mccs {mccs}");
        prop_assert!(mccs <= ccs * (1.0 + 1e-12) + 1e-15, "mccs {mccs} > ccs {ccs}");
    }

    #[test]
    fn average_sandwich(
        (c, q) in catalog_strategy(3).prop_flat_map(with_placement),
        activity in prop::collection::vec(0.0f64..=1.0, 1..=3),
    ) {
        let users = UserPopulation::new(activity).unwrap();
        let r = |s| average_rate(s, &q, &c, &users).unwrap().average_rate;
        let (lb, mccs, ccs) = (r(Scheme::LowerBound), r(Scheme::Dmccs), r(Scheme::Dccs));
        prop_assert!(lb <= mccs * (1.0 + 1e-12) + 1e-15 && mccs <= ccs * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn two_users_meet_the_bound(
        (c, q) in catalog_strategy(5).prop_flat_map(with_placement),
        demands in prop::collection::vec(0usize..5, 1..=2),
    ) {
        let demands: Vec<usize> = demands.into_iter().map(|d| d % c.n_files()).collect();
        let a = demands.len();
        let d = DemandScenario::with_users_in_order(demands, c.n_files()).unwrap();
        let lb = rate_lb_demand(&distinct_demand(&d), &q, &c, a).unwrap();
        prop_assert!(rel_close(rate_mccs_demand(&d, &q, &c), lb, 1e-12));
    }

    #[test]
    fn symmetric_placement_meets_the_bound(
        n in 1usize..=4,
        size in 0.1f64..5.0,
        q in 0.0f64..=1.0,
        demands in prop::collection::vec(0usize..4, 1..=5),
    ) {
        let c = build_catalog(&vec![1.0 / n as f64; n], &vec![size; n]).unwrap().0;
        let qs = vec![q; n];
        let demands: Vec<usize> = demands.into_iter().map(|d| d % n).collect();
        let a = demands.len();
        let d = DemandScenario::with_users_in_order(demands, n).unwrap();
        let lb = rate_lb_demand(&distinct_demand(&d), &qs, &c, a).unwrap();
        prop_assert!(rel_close(rate_mccs_demand(&d, &qs, &c), lb, 1e-12));
    }

    #[test]
    fn any_leader_group_gives_the_same_load(
        (c, q) in catalog_strategy(3).prop_flat_map(with_placement),
        demands in prop::collection::vec(0usize..3, 1..=5),
    ) {
        let demands: Vec<usize> = demands.into_iter().map(|d| d % c.n_files()).collect();
        let d = DemandScenario::with_users_in_order(demands.clone(), c.n_files()).unwrap();
        let reference = rate_mccs_demand(&d, &q, &c);
        for mask in all_leader_masks(&demands) {
            let leaders = LeaderGroup { leaders: (0..demands.len()).filter(|i| mask >> i & 1 == 1).collect() };
            prop_assert!(leaders.is_valid_for(&d));
            let r = rate_mccs_demand_with_leaders(&d, &leaders, &q, &c);
            prop_assert!(rel_close(r, reference, 1e-12), "{r} vs {reference}");
        }
    }

    #[test]
    fn more_caching_never_hurts_symmetric_placements(
        n in 1usize..=3,
        k in 1usize..=3,
        activity in 0.05f64..=1.0,
        q1 in 0.0f64..=1.0,
        q2 in 0.0f64..=1.0,
    ) {
        let c = build_catalog(&vec![1.0 / n as f64; n], &vec![1.0; n]).unwrap().0;
        let users = UserPopulation::uniform(k, activity).unwrap();
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let r = |q: f64| average_rate(Scheme::Dmccs, &vec![q; n], &c, &users).unwrap().average_rate;
        prop_assert!(r(hi) <= r(lo) * (1.0 + 1e-12) + 1e-15);
    }
}
