use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{Entity, EntityState};
use crate::config::ScenarioConfig;

pub const MAX_PEERS: usize = 3;

/// Undirected peer graph over entity ids with a per-node degree cap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeerNetwork {
    adjacency: BTreeMap<u64, BTreeSet<u64>>,
}

impl PeerNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.adjacency.contains_key(&id)
    }

    pub fn members(&self) -> impl Iterator<Item = u64> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn peers(&self, id: u64) -> impl Iterator<Item = u64> + '_ {
        self.adjacency.get(&id).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn degree(&self, id: u64) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    /// Edges as `(lo, hi)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(u64, u64)> {
        self.adjacency
            .iter()
            .flat_map(|(&u, peers)| peers.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    pub fn add_node(&mut self, id: u64) {
        self.adjacency.entry(id).or_default();
    }

    /// Inserts an edge if both nodes exist, differ and have spare degree.
    pub fn connect(&mut self, u: u64, v: u64) -> bool {
        if u == v || !self.contains(u) || !self.contains(v) {
            return false;
        }
        if self.degree(u) >= MAX_PEERS || self.degree(v) >= MAX_PEERS {
            return false;
        }
        let inserted = self.adjacency.get_mut(&u).is_some_and(|s| s.insert(v));
        if inserted {
            self.adjacency.get_mut(&v).expect("checked").insert(u);
        }
        inserted
    }

    pub fn remove_node(&mut self, id: u64) {
        if let Some(peers) = self.adjacency.remove(&id) {
            for p in peers {
                if let Some(s) = self.adjacency.get_mut(&p) {
                    s.remove(&id);
                }
            }
        }
    }

    /// Checks symmetry, absence of self-loops and the degree cap.
    pub fn is_consistent(&self) -> bool {
        self.adjacency.iter().all(|(&u, peers)| {
            peers.len() <= MAX_PEERS
                && !peers.contains(&u)
                && peers.iter().all(|v| self.adjacency.get(v).is_some_and(|s| s.contains(&u)))
        })
    }
}

/// Adds `e` to the network when its trust clears the join threshold and
/// links it to up to three members chosen uniformly among those with spare
/// degree. Returns whether the entity joined.
pub fn maybe_join_network<R: Rng + ?Sized>(e: &Entity, net: &mut PeerNetwork, cfg: &ScenarioConfig, rng: &mut R) -> bool {
    if e.state() == EntityState::Processed || e.trust < cfg.trust_join_threshold || net.contains(e.id) {
        return false;
    }
    let candidates: Vec<u64> = net.members().filter(|&m| net.degree(m) < MAX_PEERS).collect();
    net.add_node(e.id);
    let chosen: Vec<u64> = candidates.choose_multiple(rng, MAX_PEERS).copied().collect();
    for peer in chosen {
        net.connect(e.id, peer);
    }
    true
}

/// New trust after one step toward the peers' mean trust, or `None` when
/// the entity has no peers.
pub fn update_trust(trust: f64, peer_trusts: &[f64], cfg: &ScenarioConfig) -> Option<f64> {
    if peer_trusts.is_empty() {
        return None;
    }
    let mean = peer_trusts.iter().sum::<f64>() / peer_trusts.len() as f64;
    Some((trust + cfg.trust_adapt_rate * (mean - trust)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub from: u64,
    pub to: u64,
    pub amount: f64,
}

/// With probability `transaction_prob`, picks a uniformly random edge and
/// moves `transaction_fraction` of the poorer endpoint's wealth from the
/// lower-trust to the higher-trust endpoint. Equal trust moves nothing.
pub fn maybe_transact<R: Rng + ?Sized>(
    net: &PeerNetwork,
    entities: &mut BTreeMap<u64, Entity>,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Option<Transfer> {
    if net.is_empty() || !rng.random_bool(cfg.transaction_prob) {
        return None;
    }
    let edges = net.edges();
    let &(u, v) = edges.choose(rng)?;
    let (eu, ev) = (entities.get(&u)?, entities.get(&v)?);
    if eu.trust == ev.trust {
        return None;
    }
    let (from, to) = if eu.trust < ev.trust { (u, v) } else { (v, u) };
    let amount = cfg.transaction_fraction * eu.wealth.min(ev.wealth);
    if amount <= 0.0 {
        return None;
    }
    entities.get_mut(&from)?.wealth -= amount;
    entities.get_mut(&to)?.wealth += amount;
    Some(Transfer { from, to, amount })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::spawn_entity;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entity(id: u64, trust: f64, wealth: f64) -> Entity {
        let mut rng = ChaCha8Rng::seed_from_u64(id);
        let mut e = spawn_entity(id, &ScenarioConfig::default(), &mut rng).unwrap();
        e.trust = trust;
        e.wealth = wealth;
        e
    }

    #[test]
    fn low_trust_does_not_join() {
        let cfg = ScenarioConfig::default();
        let mut net = PeerNetwork::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(!maybe_join_network(&entity(1, 0.2, 50.0), &mut net, &cfg, &mut rng));
        assert!(net.is_empty());
    }

    #[test]
    fn first_member_has_no_edges() {
        let cfg = ScenarioConfig::default();
        let mut net = PeerNetwork::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(maybe_join_network(&entity(1, 0.9, 50.0), &mut net, &cfg, &mut rng));
        assert_eq!(net.len(), 1);
        assert_eq!(net.degree(1), 0);
    }

    #[test]
    fn processed_entities_never_join() {
        let cfg = ScenarioConfig::default();
        let mut net = PeerNetwork::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut e = entity(1, 0.9, 50.0);
        e.advance(EntityState::Processed);
        assert!(!maybe_join_network(&e, &mut net, &cfg, &mut rng));
    }

    #[test]
    fn connect_refuses_self_loops_and_full_nodes() {
        let mut net = PeerNetwork::new();
        for i in 0..6 {
            net.add_node(i);
        }
        assert!(!net.connect(0, 0));
        for v in 1..4 {
            assert!(net.connect(0, v));
        }
        assert!(!net.connect(0, 4));
        assert!(!net.connect(0, 1), "duplicate edge");
        assert!(net.is_consistent());
        net.remove_node(0);
        assert_eq!(net.degree(1), 0);
        assert!(net.is_consistent());
    }

    #[test]
    fn trust_update_rule() {
        let cfg = ScenarioConfig { trust_adapt_rate: 0.5, ..Default::default() };
        assert!((update_trust(0.4, &[0.8], &cfg).unwrap() - 0.6).abs() < 1e-12);
        assert!((update_trust(0.4, &[0.6, 1.0], &cfg).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(update_trust(0.7, &[0.7, 0.7], &cfg), Some(0.7));
        assert_eq!(update_trust(0.7, &[], &cfg), None);
    }

    #[test]
    fn trust_converges_monotonically_to_static_peers() {
        let cfg = ScenarioConfig::default();
        let mut t = 0.1;
        let mut gap = 0.9 - t;
        for _ in 0..200 {
            let next = update_trust(t, &[0.9, 0.9], &cfg).unwrap();
            assert!(next >= t);
            let g = 0.9 - next;
            assert!(g <= gap);
            t = next;
            gap = g;
        }
        assert!(gap < 1e-6);
    }

    #[test]
    fn zero_probability_never_transacts() {
        let cfg = ScenarioConfig { transaction_prob: 0.0, ..Default::default() };
        let mut net = PeerNetwork::new();
        let mut entities = BTreeMap::new();
        for (i, t) in [(1u64, 0.7), (2, 0.9)] {
            net.add_node(i);
            entities.insert(i, entity(i, t, 60.0));
        }
        net.connect(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!(maybe_transact(&net, &mut entities, &cfg, &mut rng).is_none());
        }
        assert!(entities.values().all(|e| e.wealth == 60.0));
    }

    #[test]
    fn transfer_flows_to_higher_trust() {
        let cfg = ScenarioConfig { transaction_prob: 1.0, ..Default::default() };
        let mut net = PeerNetwork::new();
        let mut entities = BTreeMap::new();
        entities.insert(1, entity(1, 0.6, 40.0));
        entities.insert(2, entity(2, 0.9, 80.0));
        net.add_node(1);
        net.add_node(2);
        net.connect(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = maybe_transact(&net, &mut entities, &cfg, &mut rng).unwrap();
        assert_eq!((t.from, t.to), (1, 2));
        assert!((t.amount - 0.4).abs() < 1e-12);
        assert!((entities[&1].wealth - 39.6).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn joins_respect_degree_cap_and_transactions_conserve_wealth(
            seed in any::<u64>(),
            trusts in proptest::collection::vec(0.0f64..1.0, 1..60),
        ) {
            let cfg = ScenarioConfig { transaction_prob: 1.0, trust_join_threshold: 0.3, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = PeerNetwork::new();
            let mut entities = BTreeMap::new();
            for (i, &t) in trusts.iter().enumerate() {
                let e = entity(i as u64, t, 30.0 + 50.0 * t);
                maybe_join_network(&e, &mut net, &cfg, &mut rng);
                entities.insert(e.id, e);
                prop_assert!(net.is_consistent());
            }
            for _ in 0..50 {
                let before: f64 = entities.values().map(|e| e.wealth).sum();
                maybe_transact(&net, &mut entities, &cfg, &mut rng);
                let after: f64 = entities.values().map(|e| e.wealth).sum();
                prop_assert!((before - after).abs() < 1e-9);
                prop_assert!(entities.values().all(|e| e.wealth >= 0.0));
            }
        }
    }
}
