use std::collections::BTreeSet;

use proptest::prelude::*;

use eventrag::encoding::{dot, fourier_encode, l2_norm, EncoderConfig};
use eventrag::evaluation::token_metrics;
use eventrag::graph::{edge_weight, entity_similarity, load_graph, save_graph, EventGraph};
use eventrag::model::{
    civil_from_days, days_from_civil, parse_timestamp_label, DynamicEventUnit, EntitySet, Granularity, TimeAnchor,
};
use eventrag::retrieval::{run_walks, EventTimeline, TimelineEntry};

const POOL: &[&str] = &["Rossi", "Lazio", "Roma", "Bianchi", "Serie A", "Coppa Italia", "Turin", "Milan"];

fn leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn month_len(y: i32, m: u32) -> u32 {
    match m {
        2 if leap(y) => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

/// Counts whole years and months from 1970-01-01; `None` for impossible dates.
fn counted_days(y: i32, m: u32, d: u32) -> Option<i64> {
    if !(1..=12).contains(&m) || d == 0 || d > month_len(y, m) {
        return None;
    }
    let year_len = |y: i32| if leap(y) { 366 } else { 365 };
    let mut n: i64 = if y >= 1970 {
        (1970..y).map(year_len).sum()
    } else {
        -(y..1970).map(year_len).sum::<i64>()
    };
    n += (1..m).map(|mm| i64::from(month_len(y, mm))).sum::<i64>();
    Some(n + i64::from(d) - 1)
}

fn entities(mask: u8) -> EntitySet {
    POOL.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, e)| *e)
        .collect()
}

fn deu(i: usize, day: Option<i64>, mask: u8) -> DynamicEventUnit {
    DynamicEventUnit {
        event_id: format!("n{i:04}"),
        source_id: "doc".into(),
        sentence: format!("Event {i}."),
        anchor: match day {
            Some(d) => TimeAnchor::point(d, Granularity::Day, ""),
            None => TimeAnchor::static_anchor(""),
        },
        entities: entities(mask),
        info_score: 1,
        chunk_index: 0,
    }
}

fn nodes_strategy(max: usize) -> impl Strategy<Value = Vec<(Option<i64>, u8)>> {
    prop::collection::vec((prop::option::weighted(0.85, 0i64..20_000), 1u8..=255), 1..max)
}

fn small_k() -> EncoderConfig {
    EncoderConfig {
        top_k_neighbors: 3,
        delta_t_days: 3000,
        ..EncoderConfig::default()
    }
}

fn check_graph(g: &EventGraph) {
    let k = g.config().top_k_neighbors;
    for n in g.nodes() {
        let adj = g.neighbors(&n.event_id).unwrap();
        assert!(adj.len() <= k);
        for (other, w) in adj {
            let back = g.neighbors(other).unwrap();
            assert!(back.iter().any(|(x, bw)| x == &n.event_id && bw == w), "asymmetric edge");
            assert_eq!(g.gated_weight(n, g.node(other).unwrap()), Some(*w));
        }
        for pair in adj.windows(2) {
            assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn civil_days_match_counting_oracle(y in 1i32..=9999, m in 1u32..=12, d in 1u32..=31) {
        match counted_days(y, m, d) {
            Some(e) => {
                prop_assert_eq!(days_from_civil(y, m, d).unwrap(), e);
                prop_assert_eq!(civil_from_days(e), (y, m, d));
            }
            None => prop_assert!(days_from_civil(y, m, d).is_err()),
        }
    }

    #[test]
    fn day_numbers_are_monotone(a in -700_000i64..2_900_000, b in -700_000i64..2_900_000) {
        prop_assert_eq!(a.cmp(&b), civil_from_days(a).cmp(&civil_from_days(b)));
    }

    #[test]
    fn labels_round_trip(day in -300_000i64..2_900_000, g in 0usize..3, len in 0i64..5000) {
        let gran = [Granularity::Year, Granularity::Month, Granularity::Day][g];
        let p = TimeAnchor::point(day, gran, "");
        prop_assert!(parse_timestamp_label(&p.timestamp_label()).unwrap().same_span(&p));
        let iv = TimeAnchor::interval(day, day + len, gran, "").unwrap();
        let parsed = parse_timestamp_label(&iv.timestamp_label()).unwrap();
        prop_assert!(parsed.same_span(&iv), "{} vs {}", parsed.timestamp_label(), iv.timestamp_label());
        let (s, e) = iv.coverage().unwrap();
        prop_assert!(s <= iv.index_day().unwrap() && iv.index_day().unwrap() < e);
    }

    #[test]
    fn similarity_symmetric_and_bounded(a in any::<u8>(), b in any::<u8>()) {
        let (x, y) = (entities(a), entities(b));
        let s = entity_similarity(&x, &y);
        prop_assert_eq!(s, entity_similarity(&y, &x));
        prop_assert!((0.0..=1.0).contains(&s));
        if a != 0 {
            prop_assert_eq!(entity_similarity(&x, &x), 1.0);
        }
    }

    #[test]
    fn weight_decays_with_gap(sim in 0.01f64..=1.0, g1 in 0u64..5000, g2 in 0u64..5000) {
        let (lo, hi) = (g1.min(g2), g1.max(g2));
        let (wl, wh) = (edge_weight(sim, Some(lo), 0.5, 0.5), edge_weight(sim, Some(hi), 0.5, 0.5));
        prop_assert!(wh <= wl && wl <= sim && wh > 0.0);
    }

    #[test]
    fn fourier_shift_invariance(a in -100_000i64..100_000, b in -100_000i64..100_000, s in -50_000i64..50_000) {
        let cfg = EncoderConfig::default();
        let (pa, pb) = (fourier_encode(a, &cfg), fourier_encode(b, &cfg));
        let (qa, qb) = (fourier_encode(a + s, &cfg), fourier_encode(b + s, &cfg));
        prop_assert!((l2_norm(&pa) - 1.0).abs() < 1e-12);
        prop_assert!((dot(&pa, &pb) - dot(&qa, &qb)).abs() < 1e-9);
    }

    #[test]
    fn closer_dates_are_more_similar_within_half_min_period(
        base in -50_000i64..50_000,
        g1 in 0i64..=1825,
        g2 in 0i64..=1825,
        d1 in 0i64..=15,
        d2 in 0i64..=15,
    ) {
        let narrow = EncoderConfig { min_period_days: 3650.0, ..EncoderConfig::default() };
        narrow.validate().unwrap();
        let sim = |cfg: &EncoderConfig, g: i64| dot(&fourier_encode(base, cfg), &fourier_encode(base + g, cfg));
        let (lo, hi) = (g1.min(g2), g1.max(g2));
        if lo < hi {
            prop_assert!(sim(&narrow, lo) > sim(&narrow, hi));
        }
        let cfg = EncoderConfig::default();
        let (lo, hi) = (d1.min(d2), d1.max(d2));
        if lo < hi {
            prop_assert!(sim(&cfg, lo) > sim(&cfg, hi));
        }
    }

    #[test]
    fn incremental_graph_invariants(nodes in nodes_strategy(60)) {
        let mut g = EventGraph::new(small_k(), 4);
        for (i, (day, mask)) in nodes.iter().enumerate() {
            g.insert_node(deu(i, *day, *mask)).unwrap();
        }
        check_graph(&g);
    }

    #[test]
    fn batch_build_is_order_independent(nodes in nodes_strategy(40), rot in 0usize..40) {
        let units: Vec<DynamicEventUnit> = nodes.iter().enumerate().map(|(i, (d, m))| deu(i, *d, *m)).collect();
        let mut shuffled = units.clone();
        shuffled.rotate_left(rot % units.len());
        shuffled.reverse();
        let a = EventGraph::build(small_k(), 4, units).unwrap();
        let b = EventGraph::build(small_k(), 4, shuffled).unwrap();
        check_graph(&a);
        prop_assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn graph_file_round_trip(nodes in nodes_strategy(30)) {
        let mut g = EventGraph::new(small_k(), 4);
        for (i, (day, mask)) in nodes.iter().enumerate() {
            g.insert_node(deu(i, *day, *mask)).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jsonl");
        save_graph(&g, &p).unwrap();
        let back = load_graph(&p).unwrap();
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.len(), g.len());
    }

    #[test]
    fn walks_follow_edges(nodes in nodes_strategy(40), master in any::<u64>()) {
        let mut g = EventGraph::new(small_k(), 4);
        for (i, (day, mask)) in nodes.iter().enumerate() {
            g.insert_node(deu(i, *day, *mask)).unwrap();
        }
        let seeds: Vec<String> = g.nodes().take(3).map(|n| n.event_id.clone()).collect();
        let paths = run_walks(&g, &seeds, 3, 4, master).unwrap();
        prop_assert_eq!(&paths, &run_walks(&g, &seeds, 3, 4, master).unwrap());
        for p in &paths {
            prop_assert!(p.len() <= 5);
            for step in p.windows(2) {
                prop_assert!(g.neighbors(&step[0]).unwrap().iter().any(|(x, _)| x == &step[1]));
            }
        }
    }

    #[test]
    fn timeline_layout(entries in prop::collection::vec((prop::option::of(0i64..30_000), 0usize..50), 0..30)) {
        let mut seen = BTreeSet::new();
        let priority: Vec<TimelineEntry> = entries
            .iter()
            .filter(|(_, id)| seen.insert(*id))
            .map(|(d, id)| TimelineEntry {
                event_id: format!("e{id:02}"),
                anchor: d.map_or_else(|| TimeAnchor::static_anchor(""), |d| TimeAnchor::point(d, Granularity::Day, "")),
                sentence: format!("Sentence {id}."),
            })
            .collect();
        let t = EventTimeline::from_priority(priority.clone());
        prop_assert_eq!(t.len(), priority.len());
        prop_assert!(t.static_entries.iter().all(|e| e.anchor.is_static()));
        let days: Vec<i64> = t.temporal_entries.iter().map(|e| e.anchor.index_day().unwrap()).collect();
        prop_assert!(days.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn metric_identity(s in "[A-Za-z0-9 ,.]{0,40}") {
        let m = token_metrics(&s, std::slice::from_ref(&s));
        if s.chars().any(|c| c.is_alphanumeric()) {
            prop_assert_eq!((m.accuracy, m.recall), (1.0, 1.0));
            prop_assert!(m.exact_match);
        } else {
            prop_assert_eq!((m.accuracy, m.recall), (0.0, 0.0));
        }
    }
}
