//! One domain's trainer: parameter registry, forward assembly, training
//! steps (with the mid-step bundle exchange), and validation under the
//! frozen-candidate ranking protocol.

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::{checkpoint_bytes, read_checkpoint};
use crate::data::{
    sample_negatives, DomainTag, FeatureTable, InteractionTable, SplitSpec,
};
use crate::disentangle::{augment_dropout, disentangle, dropout_mask, DisentangleMlp};
use crate::error::{CoreError, Result};
use crate::eval::{
    draw_eval_candidates, metrics_at_k, rank_candidates, MetricsSummary, RankResult,
};
use crate::graph::{build_graph, propagate, BipartiteGraph};
use crate::losses::{
    fuse, intra_loss, inter_loss, predict_logits, prediction_loss, AttentionParams, FusionMethod,
    PredictorParams,
};
use crate::modal::{item_representation, user_representation, ModalityProjector};
use crate::params::{ParamId, ParamSet};
use crate::privacy::{
    noise_for_bundle, ExchangeSession, ObfuscatedBundle, PrivacyConfig, Transport,
};
use crate::rng::{derive_seed, stream};
use crate::tape::{NodeId, Tape};
use crate::train::control::{PartyControl, PartyFinal};
use crate::train::report::{EpochLosses, PartyEpoch};
use crate::train::TrainConfig;
use rand::Rng;
use std::rc::Rc;

/// Everything one domain needs for training: the split, the training
/// graph, aligned+standardized modality features, and the frozen
/// evaluation candidates.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub domain: DomainTag,
    pub split: SplitSpec,
    pub graph: BipartiteGraph,
    pub review: Option<FeatureTable>,
    pub text: Option<FeatureTable>,
    pub visual: Option<FeatureTable>,
    pub candidates: Vec<Vec<usize>>,
}

impl DomainData {
    /// Split the filtered table, freeze the candidate negatives, build the
    /// training graph, and align/standardize whatever features exist.
    pub fn prepare(
        table: &InteractionTable,
        review: Option<&FeatureTable>,
        text: Option<&FeatureTable>,
        visual: Option<&FeatureTable>,
        seed: u64,
        eval_negatives: usize,
    ) -> Result<DomainData> {
        let split = crate::data::leave_one_out_split(table, seed)?;
        let candidates = draw_eval_candidates(table, &split.test, eval_negatives, seed)?;
        let graph = build_graph(&split.train)?;
        let align_user = |f: Option<&FeatureTable>| -> Result<Option<FeatureTable>> {
            f.map(|t| Ok(t.aligned_to(&table.users)?.standardized()))
                .transpose()
        };
        let align_item = |f: Option<&FeatureTable>| -> Result<Option<FeatureTable>> {
            f.map(|t| Ok(t.aligned_to(&table.items)?.standardized()))
                .transpose()
        };
        Ok(DomainData {
            domain: table.domain,
            split,
            graph,
            review: align_user(review)?,
            text: align_item(text)?,
            visual: align_item(visual)?,
            candidates,
        })
    }

    /// Rebuild from an already materialized split (a prepared dataset
    /// directory): train table, held-out pairs, and frozen candidates.
    pub fn from_parts(
        train: InteractionTable,
        test: Vec<(usize, usize)>,
        candidates: Vec<Vec<usize>>,
        review: Option<&FeatureTable>,
        text: Option<&FeatureTable>,
        visual: Option<&FeatureTable>,
        seed: u64,
    ) -> Result<DomainData> {
        if test.len() != candidates.len() {
            return Err(CoreError::InvalidArgument(format!(
                "{} test pairs but {} candidate rows",
                test.len(),
                candidates.len()
            )));
        }
        let train_pairs: std::collections::HashSet<(usize, usize)> =
            train.records.iter().map(|&(u, i, _)| (u, i)).collect();
        let mut seen_users = vec![false; train.num_users()];
        for &(u, i) in &test {
            if u >= train.num_users() || i >= train.num_items() {
                return Err(CoreError::InvalidArgument(format!(
                    "test pair ({u}, {i}) out of vocabulary range"
                )));
            }
            if std::mem::replace(&mut seen_users[u], true) {
                return Err(CoreError::InvalidArgument(format!(
                    "user {} has more than one held-out pair",
                    train.users.key(u)
                )));
            }
            if train_pairs.contains(&(u, i)) {
                return Err(CoreError::InvalidArgument(format!(
                    "held-out pair ({u}, {i}) also present in train"
                )));
            }
        }
        if !seen_users.iter().all(|&s| s) {
            return Err(CoreError::InvalidArgument(
                "every user needs exactly one held-out pair".into(),
            ));
        }
        let graph = build_graph(&train)?;
        let align_user = |f: Option<&FeatureTable>| -> Result<Option<FeatureTable>> {
            f.map(|t| Ok(t.aligned_to(&train.users)?.standardized()))
                .transpose()
        };
        let align_item = |f: Option<&FeatureTable>| -> Result<Option<FeatureTable>> {
            f.map(|t| Ok(t.aligned_to(&train.items)?.standardized()))
                .transpose()
        };
        Ok(DomainData {
            domain: train.domain,
            review: align_user(review)?,
            text: align_item(text)?,
            visual: align_item(visual)?,
            split: SplitSpec {
                train,
                test,
                rng_seed: seed,
            },
            graph,
            candidates,
        })
    }
}

struct Architecture {
    e0_user: ParamId,
    e0_item: ParamId,
    proj_review: Option<ModalityProjector>,
    proj_text: Option<ModalityProjector>,
    proj_visual: Option<ModalityProjector>,
    mlp_specific: DisentangleMlp,
    mlp_common: DisentangleMlp,
    predictor: PredictorParams,
    attention: Option<AttentionParams>,
    theta_tau: ParamId,
}

/// Node handles from one forward pass; exposed so tests and the embedding
/// export can read intermediate tensors.
pub struct Forward {
    pub e_user: NodeId,
    pub e_item: NodeId,
    pub h_user: NodeId,
    pub h_item: NodeId,
    pub p_specific: NodeId,
    pub p_common: NodeId,
    pub q_specific: NodeId,
    pub q_common: NodeId,
    pub q_specific_aug: Option<NodeId>,
    pub q_common_aug: Option<NodeId>,
    pub h_user_star: NodeId,
    pub tau: NodeId,
    pub lambda_used: Option<f64>,
}

pub struct Batch {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub prd: f64,
    pub intra: f64,
    pub inter: f64,
    pub objective: f64,
}

pub struct Party {
    pub domain: DomainTag,
    pub data: DomainData,
    pub cfg: TrainConfig,
    pub params: ParamSet,
    arch: Architecture,
    adam: Adam,
}

impl Party {
    pub fn new(domain: DomainTag, data: DomainData, cfg: TrainConfig) -> Result<Party> {
        cfg.validate()?;
        let seed = cfg.seed;
        let d = domain.as_str();
        let mut params = ParamSet::new();
        let m = data.split.train.num_users();
        let n = data.split.train.num_items();
        let abl = &cfg.ablations;

        let e0_user = params.register_uniform(&format!("{d}.e0_user"), m, cfg.id_dim, 0.05, seed);
        let e0_item = params.register_uniform(&format!("{d}.e0_item"), n, cfg.id_dim, 0.05, seed);

        let id_width = (cfg.layers + 1) * cfg.id_dim;
        let mut h_user_width = id_width;
        let proj_review = match (&data.review, abl.rev) {
            (Some(f), false) => {
                h_user_width += cfg.proj_dim;
                Some(ModalityProjector::register(
                    &mut params,
                    &format!("{d}.proj_review"),
                    f.dims(),
                    cfg.proj_dim,
                    seed,
                ))
            }
            _ => None,
        };
        let mut h_item_width = id_width;
        let proj_visual = match (&data.visual, abl.vis) {
            (Some(f), false) => {
                h_item_width += cfg.proj_dim;
                Some(ModalityProjector::register(
                    &mut params,
                    &format!("{d}.proj_visual"),
                    f.dims(),
                    cfg.proj_dim,
                    seed,
                ))
            }
            _ => None,
        };
        let proj_text = match (&data.text, abl.txt) {
            (Some(f), false) => {
                h_item_width += cfg.proj_dim;
                Some(ModalityProjector::register(
                    &mut params,
                    &format!("{d}.proj_text"),
                    f.dims(),
                    cfg.proj_dim,
                    seed,
                ))
            }
            _ => None,
        };

        let mlp_specific = DisentangleMlp::register(
            &mut params,
            &format!("{d}.mlp_s"),
            h_user_width,
            cfg.disen_hidden,
            cfg.disen_dim,
            seed,
        );
        let mlp_common = DisentangleMlp::register(
            &mut params,
            &format!("{d}.mlp_c"),
            h_user_width,
            cfg.disen_hidden,
            cfg.disen_dim,
            seed,
        );

        let fused_width = match (abl.com, abl.spe) {
            (false, false) => cfg.fusion.output_width(cfg.disen_dim),
            _ => cfg.disen_dim,
        };
        let predictor = PredictorParams::register(
            &mut params,
            &format!("{d}.predictor"),
            fused_width + h_item_width,
            cfg.predictor_hidden,
            seed,
        );
        let attention = if cfg.fusion == FusionMethod::Attention && !abl.com && !abl.spe {
            Some(AttentionParams::register(
                &mut params,
                &format!("{d}.attention"),
                cfg.disen_dim,
                seed,
            ))
        } else {
            None
        };
        let theta_tau = params.register(&format!("{d}.theta_tau"), crate::Tensor2::scalar(0.0));

        let adam = Adam::new(AdamConfig::with_lr(cfg.lr), &params);
        Ok(Party {
            domain,
            data,
            cfg,
            params,
            arch: Architecture {
                e0_user,
                e0_item,
                proj_review,
                proj_text,
                proj_visual,
                mlp_specific,
                mlp_common,
                predictor,
                attention,
                theta_tau,
            },
            adam,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        let samples = self.data.split.train.num_interactions() * (1 + self.cfg.neg_ratio);
        samples.div_ceil(self.cfg.batch_size)
    }

    /// Shuffled positive+negative batches for one epoch; negatives are
    /// resampled per epoch from an epoch-keyed stream.
    pub fn epoch_batches(&self, epoch: usize) -> Result<Vec<Batch>> {
        let d = self.domain.as_str();
        let epoch_s = epoch.to_string();
        let neg_seed = derive_seed(self.cfg.seed, &[d, "neg", &epoch_s]);
        let negatives = sample_negatives(&self.data.split.train, self.cfg.neg_ratio, neg_seed)?;
        let mut samples: Vec<(usize, usize, f64)> = self
            .data
            .split
            .train
            .records
            .iter()
            .map(|&(u, i, _)| (u, i, 1.0))
            .chain(negatives.into_iter().map(|(u, i, _)| (u, i, 0.0)))
            .collect();
        let mut rng = stream(self.cfg.seed, &[d, "shuffle", &epoch_s]);
        for j in (1..samples.len()).rev() {
            samples.swap(j, rng.gen_range(0..=j));
        }
        Ok(samples
            .chunks(self.cfg.batch_size)
            .map(|chunk| Batch {
                users: chunk.iter().map(|s| s.0).collect(),
                items: chunk.iter().map(|s| s.1).collect(),
                labels: chunk.iter().map(|s| s.2).collect(),
            })
            .collect())
    }

    /// Assemble the model forward pass on a fresh tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        purpose: &str,
        epoch: usize,
        step: usize,
        with_augmented: bool,
    ) -> Result<Forward> {
        let cfg = &self.cfg;
        let abl = &cfg.ablations;
        let d = self.domain.as_str();
        let epoch_s = epoch.to_string();
        let step_s = step.to_string();

        let e0u = tape.param(&self.params, self.arch.e0_user);
        let e0i = tape.param(&self.params, self.arch.e0_item);
        let e0 = tape.concat_rows(&[e0u, e0i])?;
        let emb = propagate(tape, &self.data.graph, e0, cfg.layers)?;

        let m_proj = match (&self.arch.proj_review, &self.data.review) {
            (Some(p), Some(f)) => {
                let x = tape.constant(f.matrix.clone());
                Some(p.project(tape, &self.params, x)?)
            }
            _ => None,
        };
        let h_user = user_representation(tape, emb.user, m_proj)?;

        let v_proj = match (&self.arch.proj_visual, &self.data.visual) {
            (Some(p), Some(f)) => {
                let x = tape.constant(f.matrix.clone());
                Some(p.project(tape, &self.params, x)?)
            }
            _ => None,
        };
        let t_proj = match (&self.arch.proj_text, &self.data.text) {
            (Some(p), Some(f)) => {
                let x = tape.constant(f.matrix.clone());
                Some(p.project(tape, &self.params, x)?)
            }
            _ => None,
        };
        let h_item = item_representation(tape, emb.item, v_proj, t_proj)?;

        let (p_specific, p_common) = disentangle(
            tape,
            &self.params,
            h_user,
            &self.arch.mlp_specific,
            &self.arch.mlp_common,
        )?;

        let (p_specific_aug, p_common_aug) = if with_augmented {
            let cols = tape.value(h_user)?.cols();
            let mask = dropout_mask(
                cols,
                cfg.dropout_rate,
                cfg.seed,
                &[d, "mask", &epoch_s, &step_s],
            )?;
            let (s, c) = augment_dropout(
                tape,
                &self.params,
                h_user,
                Rc::new(mask),
                &self.arch.mlp_specific,
                &self.arch.mlp_common,
            )?;
            (Some(s), Some(c))
        } else {
            (None, None)
        };

        // Laplace obfuscation: noise enters the tape as an additive
        // constant, so gradients pass straight through to P.
        let m = tape.value(p_common)?.rows();
        let (q_specific, q_common, q_specific_aug, q_common_aug, lambda_used);
        if abl.obf {
            q_specific = p_specific;
            q_common = p_common;
            q_specific_aug = p_specific_aug;
            q_common_aug = p_common_aug;
            lambda_used = None;
        } else {
            let noise_seed =
                derive_seed(cfg.seed, &[d, "noise", purpose, &epoch_s, &step_s]);
            let pconf = PrivacyConfig {
                lambda: cfg.lambda,
                seed: noise_seed,
            };
            let [n_c, n_s, n_ca, n_sa] = noise_for_bundle(m, cfg.disen_dim, &pconf, self.domain)?;
            let n_c = tape.constant(n_c);
            let n_s = tape.constant(n_s);
            q_common = tape.add(p_common, n_c)?;
            q_specific = tape.add(p_specific, n_s)?;
            q_common_aug = match p_common_aug {
                Some(p) => {
                    let n = tape.constant(n_ca);
                    Some(tape.add(p, n)?)
                }
                None => None,
            };
            q_specific_aug = match p_specific_aug {
                Some(p) => {
                    let n = tape.constant(n_sa);
                    Some(tape.add(p, n)?)
                }
                None => None,
            };
            lambda_used = Some(cfg.lambda);
        }

        let h_user_star = match (abl.com, abl.spe) {
            (false, false) => fuse(
                tape,
                &self.params,
                q_common,
                q_specific,
                cfg.fusion,
                self.arch.attention,
            )?,
            (true, false) => q_specific,
            (false, true) => q_common,
            (true, true) => {
                return Err(CoreError::InvalidArgument(
                    "cannot ablate both common and specific embeddings".into(),
                ))
            }
        };

        let theta = tape.param(&self.params, self.arch.theta_tau);
        let tau = tape.exp(theta)?;

        Ok(Forward {
            e_user: emb.user,
            e_item: emb.item,
            h_user,
            h_item,
            p_specific,
            p_common,
            q_specific,
            q_common,
            q_specific_aug,
            q_common_aug,
            h_user_star,
            tau,
            lambda_used,
        })
    }

    /// Clone the obfuscated matrices out of a forward pass. When the pass
    /// had no augmented views (evaluation), the augmented slots repeat the
    /// plain ones.
    pub fn bundle_from(&self, tape: &Tape, fwd: &Forward) -> Result<ObfuscatedBundle> {
        let common = tape.value(fwd.q_common)?.clone();
        let specific = tape.value(fwd.q_specific)?.clone();
        let common_aug = match fwd.q_common_aug {
            Some(n) => tape.value(n)?.clone(),
            None => common.clone(),
        };
        let specific_aug = match fwd.q_specific_aug {
            Some(n) => tape.value(n)?.clone(),
            None => specific.clone(),
        };
        Ok(ObfuscatedBundle {
            domain: self.domain,
            specific,
            common,
            specific_aug,
            common_aug,
            lambda_used: fwd.lambda_used,
        })
    }

    /// Assemble this party's step objective
    /// `L_prd + alpha * (L_intra + L_inter)` given the peer's obfuscated
    /// bundle (a constant on this tape). Exposed separately from
    /// [`Party::train_step`] so tests can finite-difference the whole
    /// chain with frozen noise and a frozen peer.
    pub fn step_objective(
        &self,
        tape: &mut Tape,
        fwd: &Forward,
        peer: &ObfuscatedBundle,
        batch: &Batch,
    ) -> Result<(NodeId, StepLosses)> {
        let cfg = &self.cfg;
        let abl = &cfg.ablations;
        let l_intra = if abl.intra {
            None
        } else {
            Some(intra_loss(
                tape,
                fwd.q_common,
                fwd.q_specific,
                fwd.q_common_aug.expect("augmented views exist in training"),
                fwd.q_specific_aug.expect("augmented views exist in training"),
                fwd.tau,
            )?)
        };
        let l_inter = if abl.inter {
            None
        } else {
            let peer_common = tape.constant(peer.common.clone());
            let peer_specific = tape.constant(peer.specific.clone());
            // written from this domain's perspective: own common first
            Some(inter_loss(
                tape,
                fwd.q_common,
                fwd.q_specific,
                peer_common,
                peer_specific,
                fwd.tau,
            )?)
        };

        let logits = predict_logits(
            tape,
            &self.params,
            fwd.h_user_star,
            fwd.h_item,
            Rc::new(batch.users.clone()),
            Rc::new(batch.items.clone()),
            &self.arch.predictor,
        )?;
        let l_prd = prediction_loss(tape, logits, Rc::new(batch.labels.clone()))?;

        let mut objective = l_prd;
        let mut contrastive: Option<NodeId> = None;
        for term in [l_intra, l_inter].into_iter().flatten() {
            contrastive = Some(match contrastive {
                Some(c) => tape.add(c, term)?,
                None => term,
            });
        }
        if let Some(c) = contrastive {
            let weighted = tape.scale_const(c, cfg.alpha)?;
            objective = tape.add(objective, weighted)?;
        }

        let value = |n: Option<NodeId>| -> Result<f64> {
            n.map(|n| tape.value(n)?.item()).transpose().map(|v| v.unwrap_or(0.0))
        };
        let losses = StepLosses {
            prd: tape.value(l_prd)?.item()?,
            intra: value(l_intra)?,
            inter: value(l_inter)?,
            objective: tape.value(objective)?.item()?,
        };
        Ok((objective, losses))
    }

    /// One training step: forward, swap obfuscated bundles with the peer,
    /// contrastive + prediction losses, backward, Adam update.
    pub fn train_step<T: Transport>(
        &mut self,
        session: &mut ExchangeSession<T>,
        epoch: usize,
        step: usize,
        batch: &Batch,
    ) -> Result<StepLosses> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, "train", epoch, step, true)?;

        let own_bundle = self.bundle_from(&tape, &fwd)?;
        let peer = session.swap(&own_bundle)?;

        let (objective, losses) = self.step_objective(&mut tape, &fwd, &peer, batch)?;
        if !losses.objective.is_finite() {
            return Err(CoreError::NonFinite(format!(
                "loss at {} epoch {epoch} step {step}: prd={} intra={} inter={}",
                self.domain, losses.prd, losses.intra, losses.inter
            )));
        }

        tape.backward(objective)?;
        let grads = tape.grads(&self.params);
        self.adam.step(&mut self.params, &grads)?;
        Ok(losses)
    }

    /// Rank the held-out positives against their frozen candidates with the
    /// current parameters. Returns the metrics and the obfuscated bundle of
    /// this evaluation pass.
    pub fn validate(&self, purpose: &str, epoch: usize) -> Result<(MetricsSummary, ObfuscatedBundle)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, purpose, epoch, 0, false)?;
        let bundle = self.bundle_from(&tape, &fwd)?;

        let per_user = 1 + self.cfg.eval_negatives;
        let test = &self.data.split.test;
        let mut users = Vec::with_capacity(test.len() * per_user);
        let mut items = Vec::with_capacity(test.len() * per_user);
        for (t, &(u, positive)) in test.iter().enumerate() {
            users.extend(std::iter::repeat_n(u, per_user));
            items.push(positive);
            items.extend_from_slice(&self.data.candidates[t]);
        }
        let logits = predict_logits(
            &mut tape,
            &self.params,
            fwd.h_user_star,
            fwd.h_item,
            Rc::new(users),
            Rc::new(items),
            &self.arch.predictor,
        )?;
        let probs = tape.sigmoid(logits)?;
        let scores = tape.value(probs)?;

        let mut results: Vec<RankResult> = Vec::with_capacity(test.len());
        for (t, &(u, positive)) in test.iter().enumerate() {
            let window: Vec<f64> = (0..per_user)
                .map(|j| scores.get(t * per_user + j, 0))
                .collect();
            let scorer = move |_: usize, _items: &[usize]| window.clone();
            results.push(rank_candidates(
                u,
                positive,
                &self.data.candidates[t],
                &scorer,
            )?);
        }
        Ok((metrics_at_k(&results, self.cfg.eval_k)?, bundle))
    }
}

/// The full training loop of one party, driven by the coordinator's
/// decisions. Returns the final artifacts (also handed to the control
/// plane, which is how the remote deployment ships them home).
pub fn run_party<T: Transport, C: PartyControl>(
    party: &mut Party,
    session: &mut ExchangeSession<T>,
    control: &mut C,
) -> Result<PartyFinal> {
    let steps_per_epoch = control.negotiate_steps(party.batches_per_epoch())?;

    // fallback snapshot: the untrained parameters
    let mut best_params = party.params.clone();

    let (metrics0, _) = party.validate("val", 0)?;
    let decision = control.epoch_result(&PartyEpoch {
        epoch: 0,
        losses: None,
        metrics: metrics0,
    })?;

    if !decision.stop {
        for epoch in 1..=party.cfg.epochs {
            let batches = party.epoch_batches(epoch)?;
            let mut sums = EpochLosses {
                prd: 0.0,
                intra: 0.0,
                inter: 0.0,
            };
            for step in 0..steps_per_epoch {
                let batch = &batches[step % batches.len()];
                let losses = party.train_step(session, epoch, step, batch)?;
                sums.prd += losses.prd;
                sums.intra += losses.intra;
                sums.inter += losses.inter;
            }
            let n = steps_per_epoch as f64;
            let losses = EpochLosses {
                prd: sums.prd / n,
                intra: sums.intra / n,
                inter: sums.inter / n,
            };
            let (metrics, _) = party.validate("val", epoch)?;
            let decision = control.epoch_result(&PartyEpoch {
                epoch,
                losses: Some(losses),
                metrics,
            })?;
            if decision.snapshot_best {
                best_params = party.params.clone();
            }
            if decision.stop {
                break;
            }
        }
    }

    // Final metrics always come from the checkpoint bytes (f32), so
    // save -> load -> evaluate reproduces them bit-exactly.
    let checkpoint = checkpoint_bytes(&best_params);
    let loaded = read_checkpoint(&checkpoint[..])?;
    party.params.load_values(&loaded)?;
    let (final_metrics, bundle) = party.validate("final", 0)?;

    let artifacts = PartyFinal {
        metrics: final_metrics,
        checkpoint,
        common: bundle.common.clone(),
        specific: bundle.specific.clone(),
        lambda_used: bundle.lambda_used,
    };
    control.final_result(artifacts.clone())?;
    Ok(artifacts)
}
