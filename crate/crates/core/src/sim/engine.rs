use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attributes::derive_credit_score;
use super::{
    apply_label_bias, assign_label, derive_finlit, maybe_join_network, maybe_transact, score_applicant, spawn_entity,
    update_trust, Entity, EntityState, GroupId, PeerNetwork, WealthScale,
};
use crate::config::ScenarioConfig;
use crate::dataset::{DatasetRow, Features, ScoreDiagnostics};
use crate::error::Result;

/// Per-group population counters collected during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub spawned: [u64; 2],
    pub joined_network: [u64; 2],
    pub applied: [u64; 2],
    pub positives: [u64; 2],
    pub label_flips: u64,
    pub transactions: u64,
    /// Total wealth received through transactions, per group.
    pub received_volume: [f64; 2],
    pub paid_volume: [f64; 2],
    pub max_degree_seen: usize,
}

impl SimStats {
    pub fn join_fraction(&self, g: GroupId) -> f64 {
        let i = g.index();
        if self.spawned[i] == 0 {
            0.0
        } else {
            self.joined_network[i] as f64 / self.spawned[i] as f64
        }
    }

    pub fn positive_rate(&self, g: GroupId) -> f64 {
        let i = g.index();
        if self.applied[i] == 0 {
            0.0
        } else {
            self.positives[i] as f64 / self.applied[i] as f64
        }
    }
}

/// Stepwise simulation state. Each step spawns at most one entity, lets
/// network members adapt their trust, possibly runs one transaction and
/// processes the entities whose application falls due.
pub struct Simulation {
    cfg: ScenarioConfig,
    rng: ChaCha8Rng,
    scale: WealthScale,
    step: u64,
    next_id: u64,
    entities: BTreeMap<u64, Entity>,
    schedule: BTreeMap<u64, Vec<u64>>,
    network: PeerNetwork,
    stats: SimStats,
    rows: Vec<DatasetRow>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            scale: WealthScale::from_config(&cfg),
            cfg,
            step: 0,
            next_id: 0,
            entities: BTreeMap::new(),
            schedule: BTreeMap::new(),
            network: PeerNetwork::new(),
            stats: SimStats::default(),
            rows: Vec::new(),
        })
    }

    pub fn network(&self) -> &PeerNetwork {
        &self.network
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn rows(&self) -> &[DatasetRow] {
        &self.rows
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn active_entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.n_steps
    }

    pub fn run(mut self) -> Result<(Vec<DatasetRow>, SimStats)> {
        while !self.is_finished() {
            self.step_once()?;
        }
        Ok((self.rows, self.stats))
    }

    pub fn step_once(&mut self) -> Result<()> {
        let t = self.step;
        self.spawn(t)?;
        self.adapt_trust();
        if let Some(tr) = maybe_transact(&self.network, &mut self.entities, &self.cfg, &mut self.rng) {
            self.stats.transactions += 1;
            let from_g = self.entities[&tr.from].group.index();
            let to_g = self.entities[&tr.to].group.index();
            self.stats.paid_volume[from_g] += tr.amount;
            self.stats.received_volume[to_g] += tr.amount;
        }
        self.process_applications(t)?;
        self.stats.max_degree_seen =
            self.stats.max_degree_seen.max(self.network.members().map(|m| self.network.degree(m)).max().unwrap_or(0));
        self.step += 1;
        Ok(())
    }

    fn spawn(&mut self, t: u64) -> Result<()> {
        if !self.rng.random_bool(self.cfg.spawn_prob) {
            return Ok(());
        }
        let id = self.next_id;
        self.next_id += 1;
        let e = spawn_entity(id, &self.cfg, &mut self.rng)?;
        let apply_at = t + self.rng.random_range(1..=self.cfg.max_apply_delay);
        self.stats.spawned[e.group.index()] += 1;
        if maybe_join_network(&e, &mut self.network, &self.cfg, &mut self.rng) {
            self.stats.joined_network[e.group.index()] += 1;
        }
        self.schedule.entry(apply_at).or_default().push(id);
        self.entities.insert(id, e);
        Ok(())
    }

    /// Synchronous trust update: every member moves toward the mean trust
    /// its peers had at the start of the step.
    fn adapt_trust(&mut self) {
        let updates: Vec<(u64, f64)> = self
            .network
            .members()
            .filter_map(|m| {
                let peer_trusts: Vec<f64> = self.network.peers(m).map(|p| self.entities[&p].trust).collect();
                update_trust(self.entities[&m].trust, &peer_trusts, &self.cfg).map(|t| (m, t))
            })
            .collect();
        for (id, trust) in updates {
            if let Some(e) = self.entities.get_mut(&id) {
                e.trust = trust;
            }
        }
    }

    fn process_applications(&mut self, t: u64) -> Result<()> {
        let Some(due) = self.schedule.remove(&t) else {
            return Ok(());
        };
        for id in due {
            let Some(mut e) = self.entities.remove(&id) else { continue };
            e.advance(EntityState::Applied);
            e.fin_lit = derive_finlit(e.education, e.wealth, e.trust, self.scale);
            e.credit_score = derive_credit_score(&e, &self.cfg, self.scale, &mut self.rng);
            let raw = score_applicant(&e, &self.cfg);
            let biased = apply_label_bias(raw, e.group, self.cfg.lbl_beta)?;
            let label = assign_label(biased, &self.cfg, &mut self.rng);
            e.advance(EntityState::Processed);
            self.network.remove_node(id);

            let g = e.group.index();
            self.stats.applied[g] += 1;
            self.stats.positives[g] += label.loan_approved as u64;
            self.stats.label_flips += label.flipped as u64;
            self.rows.push(DatasetRow {
                entity_id: e.id,
                timestep: t,
                group: e.group,
                features: Features {
                    wealth: e.wealth,
                    education: e.education,
                    trust: e.trust,
                    fin_lit: e.fin_lit,
                    credit_score: e.credit_score,
                    loan_hist: e.loan_hist,
                    loan_amount: e.loan_amount,
                    has_job: e.has_job,
                    has_car: e.has_car,
                    has_house: e.has_house,
                },
                qualified: label.qualified,
                loan_approved: label.loan_approved,
                diagnostics: Some(ScoreDiagnostics { raw_score: raw, biased_score: biased }),
            });
        }
        Ok(())
    }
}

/// Runs `cfg.n_steps` steps and returns the applications in time order.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<Vec<DatasetRow>> {
    Ok(Simulation::new(cfg.clone())?.run()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(beta: f64, alpha: f64, steps: u64, seed: u64) -> ScenarioConfig {
        ScenarioConfig { lbl_beta: beta, rep_alpha: alpha, n_steps: steps, rng_seed: seed, ..Default::default() }
    }

    #[test]
    fn zero_steps_is_empty() {
        assert!(run_simulation(&cfg(0.0, 0.5, 0, 1)).unwrap().is_empty());
    }

    #[test]
    fn same_config_same_rows() {
        let c = cfg(0.4, 0.6, 1500, 9);
        let a = serde_json::to_string(&run_simulation(&c).unwrap()).unwrap();
        let b = serde_json::to_string(&run_simulation(&c).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = serde_json::to_string(&run_simulation(&cfg(0.4, 0.6, 1500, 10)).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rows_are_time_ordered_and_unique() {
        let rows = run_simulation(&cfg(0.5, 0.5, 2000, 2)).unwrap();
        assert!(rows.windows(2).all(|w| w[0].timestep <= w[1].timestep));
        let mut ids: Vec<u64> = rows.iter().map(|r| r.entity_id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), rows.len());
        for r in &rows {
            for v in [r.features.trust, r.features.fin_lit, r.features.credit_score] {
                assert!((0.0..=1.0).contains(&v));
            }
            let d = r.diagnostics.unwrap();
            assert!((0.0..=1.0).contains(&d.raw_score) && (0.0..=1.0).contains(&d.biased_score));
            assert!(r.features.wealth >= 0.0);
        }
    }

    #[test]
    fn degree_cap_holds_every_step() {
        let mut sim = Simulation::new(cfg(0.0, 0.7, 3000, 4)).unwrap();
        while !sim.is_finished() {
            sim.step_once().unwrap();
            assert!(sim.network().is_consistent());
        }
        assert!(sim.stats().max_degree_seen <= 3);
        assert!(sim.stats().max_degree_seen >= 2, "network never formed");
    }

    #[test]
    fn network_and_trade_favor_group_a() {
        let (_, stats) = Simulation::new(cfg(0.0, 0.5, 10_000, 5)).unwrap().run().unwrap();
        assert!(stats.join_fraction(GroupId::A) > stats.join_fraction(GroupId::B));
        assert!(stats.received_volume[0] > stats.received_volume[1]);
        assert!(stats.transactions > 0);
    }

    #[test]
    fn no_transactions_when_disabled() {
        let c = ScenarioConfig { transaction_prob: 0.0, ..cfg(0.0, 0.5, 2000, 5) };
        let (_, stats) = Simulation::new(c).unwrap().run().unwrap();
        assert_eq!(stats.transactions, 0);
        assert_eq!(stats.received_volume, [0.0, 0.0]);
    }

    #[test]
    fn prejudice_lowers_protected_base_rate() {
        let (_, stats) = Simulation::new(cfg(0.4, 0.5, 10_000, 6)).unwrap().run().unwrap();
        assert!(stats.positive_rate(GroupId::B) < stats.positive_rate(GroupId::A));
    }

    #[test]
    fn structural_bias_without_prejudice() {
        let (_, stats) = Simulation::new(cfg(0.0, 0.5, 10_000, 7)).unwrap().run().unwrap();
        assert!(stats.positive_rate(GroupId::A) > stats.positive_rate(GroupId::B));
    }
}
