use mfabc::cache_io::{load_caches, read_caches, save_caches, write_caches};
use mfabc::kuramoto::{default_prior, KuramotoConfig, KuramotoModel};
use mfabc::*;
use proptest::prelude::*;

fn record() -> impl Strategy<Value = Option<SimRecord>> {
    prop::option::of(
        (
            prop_oneof![4 => 0.0f64..10.0, 1 => Just(f64::INFINITY)],
            0u64..u64::MAX / 2,
        )
            .prop_map(|(d, t_ns)| SimRecord { d, t_ns }),
    )
}

fn entry(dim: usize) -> impl Strategy<Value = CacheEntry> {
    (
        prop::collection::vec(-1e6f64..1e6, dim),
        1e-300f64..1e3,
        1e-3f64..=1.0,
        0.0f64..1.0,
        record(),
        record(),
        -1e9f64..1e9,
    )
        .prop_map(|(theta, q_value, alpha, u, lo, hi, weight)| CacheEntry {
            theta: theta.into(),
            q_value,
            lo,
            alpha,
            u,
            hi: hi.or(if lo.is_none() {
                Some(SimRecord { d: 1.0, t_ns: 1 })
            } else {
                None
            }),
            weight,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn csv_round_trip_is_bit_exact(
        gens in (1usize..4).prop_flat_map(|dim| prop::collection::vec(prop::collection::vec(entry(dim), 0..30), 1..4))
    ) {
        let caches: Vec<ParticleCache> = gens
            .into_iter()
            .enumerate()
            .map(|(g, entries)| {
                let mut c = ParticleCache::new(g + 1, 1.0);
                c.entries = entries;
                c
            })
            .collect();
        let refs: Vec<&ParticleCache> = caches.iter().collect();
        let mut buf = Vec::new();
        write_caches(&mut buf, &refs).unwrap();
        let back = read_caches(buf.as_slice()).unwrap();
        let nonempty: Vec<&ParticleCache> = caches.iter().filter(|c| !c.entries.is_empty()).collect();
        prop_assert_eq!(back.len(), nonempty.len());
        for (a, b) in back.iter().zip(nonempty) {
            prop_assert_eq!(a.generation, b.generation);
            prop_assert_eq!(a.entries.len(), b.entries.len());
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(x.theta.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                                y.theta.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
                prop_assert_eq!(x.weight.to_bits(), y.weight.to_bits());
                prop_assert_eq!(x.q_value.to_bits(), y.q_value.to_bits());
                prop_assert_eq!(x.u.to_bits(), y.u.to_bits());
                prop_assert_eq!(x.alpha.to_bits(), y.alpha.to_bits());
                prop_assert_eq!(x.lo, y.lo);
                prop_assert_eq!(x.hi, y.hi);
            }
        }
    }
}

#[test]
fn sampled_cache_weights_recompute_after_reload() {
    let config = KuramotoConfig::default().with_oscillators(8);
    let model = KuramotoModel::new(config, 0.5).unwrap();
    let prior = default_prior();
    let q = ImportanceDistribution::prior(prior.clone());
    let nbhd = Neighborhood::new(1.0, SummaryVector(vec![0.9, 1.0, 0.95])).unwrap();
    let (_, cache) = mf_abc_is(
        &model,
        &prior,
        &q,
        &nbhd,
        ContinuationPolicy::new(0.3, 0.2).unwrap(),
        StoppingCondition::MaxProposals(200),
        &SamplerSettings::new(RunSeed(2)),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.csv");
    save_caches(&path, &[&cache]).unwrap();
    let back = load_caches(&path).unwrap();
    assert_eq!(back[0].entries, cache.entries);
    for e in &back[0].entries {
        let pi = prior.density(&e.theta).unwrap();
        assert_eq!(e.recompute_weight(pi, 1.0).unwrap().to_bits(), e.weight.to_bits());
    }
}
