//! The policy generator: encode robot observations, fuse retrieved memory
//! tokens via cross-attention, and predict action chunks trained by
//! behavior cloning.
//!
//! The network is an explicit static graph over nncore ops. Forward
//! returns a cache; `backward` chains the op backwards by hand and routes
//! token-level gradients back to the learned inputs (state/sep tokens,
//! mask/trajectory/proprio MLPs, segment/stream embeddings, query tokens).
//! Frame features and text tokens are fixed seeded functions and receive
//! no gradient.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::bank::{Bank, BankEntry, Frame};
use crate::encoders::{
    self, assemble_memory, concat_memories, FeaturizerConfig, MemoryFeature, Segment, Token,
    TokenSequence, MASK_GRID,
};
use crate::error::{Error, Result};
use crate::nncore::ops::{
    layernorm_backward, layernorm_forward, linear_backward, linear_forward, mha_backward,
    mha_forward, mlp_backward, mlp_forward, AttentionWeights, LayerNormCache, LinearCache,
    MhaCache, MlpCache,
};
use crate::nncore::{AdamParams, InitScheme, ParameterStore, Tensor2D};
use crate::retriever::{retrieve_per_view_embedded, EmbedderConfig, RetrievalIndex};
use crate::rng::{fnv1a, Rng64};
use crate::sim::Demo;

/// How retrieved features meet the robot stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Memory tokens act as queries over the robot representation; the
    /// fused block (one row per memory token) is appended to the robot
    /// sequence for the trunk.
    Paper,
    /// Conventional cross-attention: robot tokens query the memory.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub d_model: usize,
    pub d_hidden: usize,
    pub heads: usize,
    pub layers: usize,
    /// Action chunk horizon H.
    pub horizon: usize,
    pub dof: usize,
    pub k_retrieved: usize,
    pub keep_fraction: f64,
    pub grid: usize,
    pub lr: f64,
    pub seed: u64,
    pub fusion_mode: FusionMode,
    /// Temporal ensembling weight decay: w_i proportional to exp(-m * i).
    pub ensemble_m: f64,
    /// Execute only the first action of each predicted chunk.
    pub first_action_only: bool,
    pub use_retrieval: bool,
    pub use_mask: bool,
    pub use_trajectory: bool,
    pub train_steps: usize,
    pub batch_size: usize,
    pub feat_seed: u64,
    pub text_seed: u64,
    pub views: Vec<String>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            d_model: 64,
            d_hidden: 128,
            heads: 4,
            layers: 2,
            horizon: 8,
            dof: 4,
            k_retrieved: 3,
            keep_fraction: 0.1,
            grid: 4,
            lr: 1e-3,
            seed: 0,
            fusion_mode: FusionMode::Paper,
            ensemble_m: 0.1,
            first_action_only: false,
            use_retrieval: true,
            use_mask: true,
            use_trajectory: true,
            train_steps: 300,
            batch_size: 8,
            feat_seed: 7002,
            text_seed: 7003,
            views: vec!["front".to_string()],
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_retrieved == 0 {
            return Err(Error::Config("k_retrieved must be >= 1".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config("keep_fraction must be in (0, 1]".into()));
        }
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config("heads must divide d_model".into()));
        }
        if self.horizon == 0 || self.dof == 0 {
            return Err(Error::Config("horizon and dof must be >= 1".into()));
        }
        if self.views.is_empty() {
            return Err(Error::Config("at least one view required".into()));
        }
        Ok(())
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        FeaturizerConfig {
            grid: self.grid,
            d_model: self.d_model,
            seed: self.feat_seed,
        }
    }
}

/// One robot observation: per-view frames, proprioceptive state, and the
/// language instruction.
#[derive(Debug, Clone)]
pub struct RobotObservation {
    pub frames: BTreeMap<String, Frame>,
    pub proprio: Vec<f64>,
    pub instruction: String,
}

/// Fixed-horizon window of future continuous actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub horizon: usize,
    pub dof: usize,
    /// Row-major horizon x dof.
    pub actions: Vec<f64>,
}

impl ActionChunk {
    pub fn zeros(horizon: usize, dof: usize) -> Self {
        ActionChunk {
            horizon,
            dof,
            actions: vec![0.0; horizon * dof],
        }
    }

    pub fn action(&self, step: usize) -> &[f64] {
        &self.actions[step * self.dof..(step + 1) * self.dof]
    }
}

/// Mean absolute error over the chunk.
pub fn bc_loss(pred: &ActionChunk, expert: &ActionChunk) -> Result<f64> {
    if pred.horizon != expert.horizon || pred.dof != expert.dof {
        return Err(Error::ShapeMismatch {
            context: "bc_loss chunks",
            got_rows: pred.horizon,
            got_cols: pred.dof,
            want_rows: expert.horizon,
            want_cols: expert.dof,
        });
    }
    let n = pred.actions.len() as f64;
    Ok(pred
        .actions
        .iter()
        .zip(&expert.actions)
        .map(|(p, e)| (p - e).abs())
        .sum::<f64>()
        / n)
}

/// d(bc_loss)/d(pred).
pub fn bc_loss_backward(pred: &ActionChunk, expert: &ActionChunk) -> Tensor2D {
    let n = pred.actions.len() as f64;
    let data = pred
        .actions
        .iter()
        .zip(&expert.actions)
        .map(|(p, e)| {
            if p > e {
                1.0 / n
            } else if p < e {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Tensor2D::from_vec(pred.horizon, pred.dof, data)
}

// ---------------------------------------------------------------------------
// pre-encoded (parameter-free) features

/// Parameter-free part of a memory entry's encoding; everything learned is
/// applied per forward pass so these can be cached across training steps.
#[derive(Debug, Clone)]
pub struct MemoryRaw {
    pub entry_id: String,
    pub score: f64,
    pub text: Vec<Token>,
    pub video: TokenSequence,
    pub mask_occupancy: Vec<f64>,
    pub traj_features: Vec<f64>,
}

/// Parameter-free part of an observation encoding.
#[derive(Debug, Clone)]
pub struct ObservationRaw {
    pub text: Vec<Token>,
    /// Per-view frame tokens, flattened in view order.
    pub video: Vec<Token>,
    /// Per-view flattened centered cell means (grid^2 * 3 each), input to
    /// the learned scene-summary token.
    pub scene: Vec<Vec<f64>>,
    pub proprio: Vec<f64>,
}

pub fn encode_memory_raw(entry: &BankEntry, score: f64, cfg: &PolicyConfig) -> Result<MemoryRaw> {
    let per_frame = match &entry.frame_features {
        Some(features) => encoders::frame_features_from_ingested(features, cfg.d_model)?,
        None => encoders::frame_features(&entry.clip, &cfg.featurizer())?,
    };
    let video = encoders::reduce_tokens(&per_frame, cfg.keep_fraction)?;
    Ok(MemoryRaw {
        entry_id: entry.entry_id.clone(),
        score,
        text: encoders::text_tokens(&entry.narration.text, cfg.d_model, cfg.text_seed)?,
        video,
        mask_occupancy: encoders::mask_occupancy(&entry.mask, MASK_GRID)?,
        traj_features: encoders::trajectory_features(
            &entry.trajectory,
            entry.clip.width(),
            entry.clip.height(),
        )?,
    })
}

pub fn encode_observation_raw(obs: &RobotObservation, cfg: &PolicyConfig) -> Result<ObservationRaw> {
    let featurizer = cfg.featurizer();
    let proj = encoders::featurizer_projection(&featurizer);
    let mut video = Vec::new();
    let mut scene = Vec::new();
    for view in &cfg.views {
        let frame = obs.frames.get(view).ok_or_else(|| {
            Error::invariant("obs-views", format!("observation missing view {view}"))
        })?;
        let mut flat = Vec::with_capacity(featurizer.grid * featurizer.grid * 3);
        for mean in encoders::grid_cell_means(frame, featurizer.grid) {
            let mut v = vec![0.0f64; cfg.d_model];
            for (c, m) in mean.iter().enumerate() {
                let centered = (m / 255.0 - 0.5) * 2.0;
                flat.push(centered);
                for (vi, p) in v.iter_mut().zip(proj.row(c)) {
                    *vi += centered * p;
                }
            }
            video.push(Token::new(v));
        }
        scene.push(flat);
    }
    if obs.proprio.iter().any(|v| !v.is_finite()) {
        return Err(Error::invariant("obs-proprio", "proprio must be finite"));
    }
    Ok(ObservationRaw {
        text: encoders::text_tokens(&obs.instruction, cfg.d_model, cfg.text_seed)?,
        video,
        scene,
        proprio: obs.proprio.clone(),
    })
}

// ---------------------------------------------------------------------------
// the network

const STREAM_ROBOT: usize = 0;
const STREAM_MEMORY: usize = 1;
const STREAM_QUERY: usize = 2;

/// Learned absolute position embeddings cover sequences up to this length.
pub const MAX_POSITIONS: usize = 512;

/// Fixed coordinate code added on top of the learned position rows.
/// Video tokens carry their grid cell's (col, row) in two dedicated
/// dimensions so a shared-weight attention readout can recover object
/// coordinates without per-cell calibration; other tokens carry a linear
/// ramp over their run in a third dimension.
const COORD_SCALE: f64 = 0.5;

fn coord_code(segment: Segment, local_idx: usize, grid: usize, d: usize, out: &mut [f64]) {
    match segment {
        Segment::Video => {
            let cell = local_idx % (grid * grid);
            let col = cell % grid;
            let row = cell / grid;
            if d > 0 {
                out[0] += COORD_SCALE * (2.0 * col as f64 / (grid - 1).max(1) as f64 - 1.0);
            }
            if d > 1 {
                out[1] += COORD_SCALE * (2.0 * row as f64 / (grid - 1).max(1) as f64 - 1.0);
            }
        }
        _ => {
            if d > 2 {
                out[2] += COORD_SCALE * (local_idx as f64 / 32.0).min(1.0);
            }
        }
    }
}

/// Position-embedding rows are keyed by the index inside each contiguous
/// run of one segment kind, not by the global sequence position: the same
/// visual cell then always hits the same row no matter how long the
/// instruction is or where a memory entry sits in the concatenation.
fn local_pe_indices(segments: &[Segment]) -> Vec<usize> {
    let mut out = Vec::with_capacity(segments.len());
    let mut run_segment: Option<Segment> = None;
    let mut counter = 0usize;
    for seg in segments {
        if run_segment == Some(*seg) {
            counter += 1;
        } else {
            run_segment = Some(*seg);
            counter = 0;
        }
        out.push(counter);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MemRowKind {
    /// Text or video token: fixed input, no gradient.
    Fixed,
    State,
    Sep,
    /// Mask MLP output of sorted entry i.
    Mask(usize),
    /// Trajectory MLP output of sorted entry i.
    Traj(usize),
}

pub struct PolicyNet {
    pub config: PolicyConfig,
    pub store: ParameterStore,
}

struct TrunkLayerCache {
    ln1: LayerNormCache,
    attn: MhaCache,
    ln2: LayerNormCache,
    mlp: MlpCache,
}

pub struct ForwardCache {
    robot_rows: usize,
    memory_rows: usize,
    /// Rows entering the trunk (robot + optional fused block + queries).
    pub trunk_rows: usize,
    robot_segments: Vec<Segment>,
    memory_segments: Vec<Segment>,
    robot_pe_rows: Vec<usize>,
    memory_pe_rows: Vec<usize>,
    memory_kinds: Vec<MemRowKind>,
    proprio_mlp: MlpCache,
    scene_mlps: Vec<MlpCache>,
    mask_mlps: Vec<Option<MlpCache>>,
    traj_mlps: Vec<Option<MlpCache>>,
    fusion: Option<MhaCache>,
    trunk: Vec<TrunkLayerCache>,
    final_ln: LayerNormCache,
    head: LinearCache,
    /// Embedded memory matrix (inputs to fusion), for gradient checks.
    pub memory_matrix: Tensor2D,
}

pub struct Gradients {
    pub params: BTreeMap<String, Tensor2D>,
    /// Gradient w.r.t. the embedded memory token matrix.
    pub d_memory_tokens: Option<Tensor2D>,
}

impl PolicyNet {
    pub fn new(config: PolicyConfig) -> Result<PolicyNet> {
        config.validate()?;
        let mut store = ParameterStore::new();
        let d = config.d_model;
        let h = config.d_hidden;
        let base_seed = config.seed;
        {
            let mut init = |name: &str, rows: usize, cols: usize, scheme: InitScheme| {
                store.init(name, rows, cols, scheme, base_seed ^ fnv1a(name.as_bytes()));
            };

            init("state_token", 1, d, InitScheme::UniformScaled);
            init("sep_token", 1, d, InitScheme::UniformScaled);
            init("segment_embed", Segment::COUNT, d, InitScheme::UniformScaled);
            init("stream_embed", 3, d, InitScheme::UniformScaled);
            init("pos_embed", MAX_POSITIONS, d, InitScheme::UniformScaled);
            init("query_tokens", config.horizon, d, InitScheme::UniformScaled);

            for (name, input_dim) in [
                ("mask_mlp", MASK_GRID * MASK_GRID),
                ("traj_mlp", encoders::TRAJ_POINTS * 2),
                ("proprio_mlp", config.dof),
                ("scene_mlp", config.grid * config.grid * 3),
            ] {
                init(&format!("{name}.w1"), input_dim, h, InitScheme::UniformScaled);
                init(&format!("{name}.b1"), 1, h, InitScheme::Zeros);
                init(&format!("{name}.w2"), h, d, InitScheme::UniformScaled);
                init(&format!("{name}.b2"), 1, d, InitScheme::Zeros);
            }

            for proj in ["wq", "wk", "wv", "wo"] {
                init(&format!("fuse.{proj}"), d, d, InitScheme::UniformScaled);
            }

            for layer in 0..config.layers {
                for proj in ["wq", "wk", "wv", "wo"] {
                    init(&format!("trunk{layer}.attn.{proj}"), d, d, InitScheme::UniformScaled);
                }
                init(&format!("trunk{layer}.ln1.g"), 1, d, InitScheme::Zeros);
                init(&format!("trunk{layer}.ln1.b"), 1, d, InitScheme::Zeros);
                init(&format!("trunk{layer}.ln2.g"), 1, d, InitScheme::Zeros);
                init(&format!("trunk{layer}.ln2.b"), 1, d, InitScheme::Zeros);
                init(&format!("trunk{layer}.mlp.w1"), d, h, InitScheme::UniformScaled);
                init(&format!("trunk{layer}.mlp.b1"), 1, h, InitScheme::Zeros);
                init(&format!("trunk{layer}.mlp.w2"), h, d, InitScheme::UniformScaled);
                init(&format!("trunk{layer}.mlp.b2"), 1, d, InitScheme::Zeros);
            }
            init("final_ln.g", 1, d, InitScheme::Zeros);
            init("final_ln.b", 1, d, InitScheme::Zeros);
            // zero head: the untrained policy predicts the zero chunk
            init("head.w", d, config.dof, InitScheme::Zeros);
            init("head.b", 1, config.dof, InitScheme::Zeros);
        }

        let mut net = PolicyNet { config, store };
        // layernorm gains start at 1
        let names: Vec<String> = net.store.names().iter().map(|s| s.to_string()).collect();
        for name in names {
            if name.ends_with("ln1.g") || name.ends_with("ln2.g") || name == "final_ln.g" {
                let cols = net.store.get(&name).cols;
                for i in 0..cols {
                    net.store.nudge(&name, i, 1.0);
                }
            }
        }
        Ok(net)
    }

    pub fn clone_net(&self) -> PolicyNet {
        PolicyNet {
            config: self.config.clone(),
            store: self.store.clone(),
        }
    }

    pub fn attention_weights(&self, prefix: &str) -> AttentionWeights {
        AttentionWeights {
            wq: self.store.get(&format!("{prefix}.wq")).clone(),
            wk: self.store.get(&format!("{prefix}.wk")).clone(),
            wv: self.store.get(&format!("{prefix}.wv")).clone(),
            wo: self.store.get(&format!("{prefix}.wo")).clone(),
        }
    }

    /// Spec-facing observation tokenization: [TEXT..][STATE][VIDEO..] with
    /// absolute positions. The STATE token is the proprio MLP output.
    pub fn encode_observation(&self, obs: &RobotObservation) -> Result<TokenSequence> {
        let raw = encode_observation_raw(obs, &self.config)?;
        let (seq, _) = self.robot_sequence(&raw)?;
        Ok(seq)
    }

    fn robot_sequence(&self, raw: &ObservationRaw) -> Result<(TokenSequence, MlpCache)> {
        let proprio_in = Tensor2D::from_vec(1, raw.proprio.len(), raw.proprio.clone());
        let (proprio_out, cache) = mlp_forward(
            &proprio_in,
            self.store.get("proprio_mlp.w1"),
            self.store.get("proprio_mlp.b1"),
            self.store.get("proprio_mlp.w2"),
            self.store.get("proprio_mlp.b2"),
        )?;
        let mut seq = TokenSequence::default();
        for t in &raw.text {
            seq.push(t.clone(), Segment::Text);
        }
        seq.push(Token::new(proprio_out.data), Segment::State);
        for t in &raw.video {
            seq.push(t.clone(), Segment::Video);
        }
        Ok((seq, cache))
    }

    /// Assemble the memory token sequence for the current parameters:
    /// canonical entry order, per-entry layout, SEP separators. Returns
    /// the sequence plus row bookkeeping for the backward pass.
    fn build_memory(
        &self,
        memories: &[MemoryRaw],
    ) -> Result<(TokenSequence, Vec<MemRowKind>, Vec<Option<MlpCache>>, Vec<Option<MlpCache>>)>
    {
        let mut order: Vec<usize> = (0..memories.len()).collect();
        order.sort_by(|&a, &b| {
            memories[b]
                .score
                .partial_cmp(&memories[a].score)
                .unwrap()
                .then_with(|| memories[a].entry_id.cmp(&memories[b].entry_id))
        });

        let state = Token::new(self.store.get("state_token").data.clone());
        let sep = Token::new(self.store.get("sep_token").data.clone());
        let d = self.config.d_model;

        let mut features = Vec::with_capacity(memories.len());
        let mut kinds = Vec::new();
        let mut mask_caches = Vec::with_capacity(memories.len());
        let mut traj_caches = Vec::with_capacity(memories.len());
        for (slot, &idx) in order.iter().enumerate() {
            let raw = &memories[idx];
            let (mask_token, mask_cache) = if self.config.use_mask {
                let input =
                    Tensor2D::from_vec(1, raw.mask_occupancy.len(), raw.mask_occupancy.clone());
                let (out, cache) = mlp_forward(
                    &input,
                    self.store.get("mask_mlp.w1"),
                    self.store.get("mask_mlp.b1"),
                    self.store.get("mask_mlp.w2"),
                    self.store.get("mask_mlp.b2"),
                )?;
                (Token::new(out.data), Some(cache))
            } else {
                (Token::new(vec![0.0; d]), None)
            };
            let (traj_token, traj_cache) = if self.config.use_trajectory {
                let input =
                    Tensor2D::from_vec(1, raw.traj_features.len(), raw.traj_features.clone());
                let (out, cache) = mlp_forward(
                    &input,
                    self.store.get("traj_mlp.w1"),
                    self.store.get("traj_mlp.b1"),
                    self.store.get("traj_mlp.w2"),
                    self.store.get("traj_mlp.b2"),
                )?;
                (Token::new(out.data), Some(cache))
            } else {
                (Token::new(vec![0.0; d]), None)
            };
            mask_caches.push(mask_cache);
            traj_caches.push(traj_cache);

            let seq = assemble_memory(&raw.text, &raw.video, &[mask_token], &[traj_token], &state)?;
            if slot > 0 {
                kinds.push(MemRowKind::Sep);
            }
            for _ in 0..raw.text.len() {
                kinds.push(MemRowKind::Fixed);
            }
            kinds.push(MemRowKind::State);
            for _ in 0..raw.video.len() {
                kinds.push(MemRowKind::Fixed);
            }
            kinds.push(MemRowKind::Mask(slot));
            kinds.push(MemRowKind::Traj(slot));
            features.push(MemoryFeature {
                entry_id: raw.entry_id.clone(),
                sequence: seq,
                score: raw.score,
            });
        }
        let seq = concat_memories(&features, &sep);
        debug_assert_eq!(seq.len(), kinds.len());
        Ok((seq, kinds, mask_caches, traj_caches))
    }

    fn embed_sequence(&self, seq: &TokenSequence, stream: usize) -> Result<(Tensor2D, Vec<usize>)> {
        let d = self.config.d_model;
        let seg = self.store.get("segment_embed");
        let str_emb = self.store.get("stream_embed");
        let pos_embed = self.store.get("pos_embed");
        let pe_rows = local_pe_indices(&seq.segments);
        let mut out = Tensor2D::zeros(seq.len(), d);
        for (row, ((token, segment), pe_row)) in seq
            .tokens
            .iter()
            .zip(&seq.segments)
            .zip(&pe_rows)
            .enumerate()
        {
            if *pe_row >= MAX_POSITIONS {
                return Err(Error::invariant(
                    "pos-embed",
                    format!("position {pe_row} exceeds the table ({MAX_POSITIONS})"),
                ));
            }
            let out_row = out.row_mut(row);
            for c in 0..d {
                out_row[c] = token.vector[c]
                    + pos_embed.get(*pe_row, c)
                    + seg.get(segment.index(), c)
                    + str_emb.get(stream, c);
            }
            coord_code(*segment, *pe_row, self.config.grid, d, out_row);
        }
        Ok((out, pe_rows))
    }

    /// Full forward pass: observation + retrieved memories -> action chunk.
    pub fn forward(
        &self,
        obs: &ObservationRaw,
        memories: &[MemoryRaw],
    ) -> Result<(ActionChunk, ForwardCache)> {
        let cfg = &self.config;
        let d = cfg.d_model;

        let (robot_seq, proprio_mlp) = self.robot_sequence(obs)?;
        let (embedded, robot_pe_rows) = self.embed_sequence(&robot_seq, STREAM_ROBOT)?;
        // learned scene-summary token per view, appended after the
        // spec-shaped observation tokens
        let mut scene_mlps = Vec::with_capacity(obs.scene.len());
        let mut scene_rows = Vec::with_capacity(obs.scene.len());
        for flat in &obs.scene {
            let input = Tensor2D::from_vec(1, flat.len(), flat.clone());
            let (out, cache) = mlp_forward(
                &input,
                self.store.get("scene_mlp.w1"),
                self.store.get("scene_mlp.b1"),
                self.store.get("scene_mlp.w2"),
                self.store.get("scene_mlp.b2"),
            )?;
            scene_rows.push(out);
            scene_mlps.push(cache);
        }
        let robot = {
            let mut blocks: Vec<&Tensor2D> = vec![&embedded];
            blocks.extend(scene_rows.iter());
            Tensor2D::vstack(&blocks)
        };

        let use_memory = cfg.use_retrieval && !memories.is_empty();
        let (memory_seq, memory_kinds, mask_mlps, traj_mlps) = if use_memory {
            self.build_memory(memories)?
        } else {
            (TokenSequence::default(), Vec::new(), Vec::new(), Vec::new())
        };
        let (memory, memory_pe_rows) = self.embed_sequence(&memory_seq, STREAM_MEMORY)?;

        // fusion
        let mut fusion_cache = None;
        let trunk_input_blocks: Vec<Tensor2D> = if use_memory {
            let weights = self.attention_weights("fuse");
            match cfg.fusion_mode {
                FusionMode::Paper => {
                    let (attn_out, cache) =
                        mha_forward(&memory, &robot, &robot, &weights, cfg.heads)?;
                    fusion_cache = Some(cache);
                    let mut fused = memory.clone();
                    fused.add_assign(&attn_out);
                    vec![robot.clone(), fused]
                }
                FusionMode::Standard => {
                    let (attn_out, cache) =
                        mha_forward(&robot, &memory, &memory, &weights, cfg.heads)?;
                    fusion_cache = Some(cache);
                    let mut fused = robot.clone();
                    fused.add_assign(&attn_out);
                    vec![fused]
                }
            }
        } else {
            vec![robot.clone()]
        };

        // query tokens
        let mut queries = Tensor2D::zeros(cfg.horizon, d);
        let qtok = self.store.get("query_tokens");
        let str_emb = self.store.get("stream_embed");
        let pos_embed = self.store.get("pos_embed");
        for i in 0..cfg.horizon {
            for c in 0..d {
                queries.set(
                    i,
                    c,
                    qtok.get(i, c) + pos_embed.get(i, c) + str_emb.get(STREAM_QUERY, c),
                );
            }
        }

        let mut blocks: Vec<&Tensor2D> = trunk_input_blocks.iter().collect();
        blocks.push(&queries);
        let mut x = Tensor2D::vstack(&blocks);
        let trunk_rows = x.rows;

        // transformer trunk (pre-LN blocks)
        let mut trunk = Vec::with_capacity(cfg.layers);
        for layer in 0..cfg.layers {
            let (ln1_out, ln1) = layernorm_forward(
                &x,
                self.store.get(&format!("trunk{layer}.ln1.g")),
                self.store.get(&format!("trunk{layer}.ln1.b")),
            )?;
            let weights = self.attention_weights(&format!("trunk{layer}.attn"));
            let (attn_out, attn) = mha_forward(&ln1_out, &ln1_out, &ln1_out, &weights, cfg.heads)?;
            x.add_assign(&attn_out);

            let (ln2_out, ln2) = layernorm_forward(
                &x,
                self.store.get(&format!("trunk{layer}.ln2.g")),
                self.store.get(&format!("trunk{layer}.ln2.b")),
            )?;
            let (mlp_out, mlp) = mlp_forward(
                &ln2_out,
                self.store.get(&format!("trunk{layer}.mlp.w1")),
                self.store.get(&format!("trunk{layer}.mlp.b1")),
                self.store.get(&format!("trunk{layer}.mlp.w2")),
                self.store.get(&format!("trunk{layer}.mlp.b2")),
            )?;
            x.add_assign(&mlp_out);
            trunk.push(TrunkLayerCache { ln1, attn, ln2, mlp });
        }

        let (normed, final_ln) =
            layernorm_forward(&x, self.store.get("final_ln.g"), self.store.get("final_ln.b"))?;
        let query_rows = normed.row_slice(normed.rows - cfg.horizon, normed.rows);
        let (chunk_out, head) =
            linear_forward(&query_rows, self.store.get("head.w"), self.store.get("head.b"))?;

        let chunk = ActionChunk {
            horizon: cfg.horizon,
            dof: cfg.dof,
            actions: chunk_out.data,
        };
        Ok((
            chunk,
            ForwardCache {
                robot_rows: robot.rows,
                memory_rows: memory.rows,
                trunk_rows,
                robot_segments: robot_seq.segments,
                memory_segments: memory_seq.segments,
                robot_pe_rows,
                memory_pe_rows,
                memory_kinds,
                proprio_mlp,
                scene_mlps,
                mask_mlps,
                traj_mlps,
                fusion: fusion_cache,
                trunk,
                final_ln,
                head,
                memory_matrix: memory,
            },
        ))
    }

    /// Chain the backward passes; `d_chunk` is dLoss/dChunk (H x dof).
    pub fn backward(&self, cache: &ForwardCache, d_chunk: &Tensor2D) -> Result<Gradients> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let total_rows = cache.trunk_rows;
        let mut grads: BTreeMap<String, Tensor2D> = BTreeMap::new();
        fn add(map: &mut BTreeMap<String, Tensor2D>, name: &str, g: Tensor2D) {
            map.entry(name.to_string())
                .and_modify(|acc| acc.add_assign(&g))
                .or_insert(g);
        }

        // head
        let head_grads = linear_backward(d_chunk, self.store.get("head.w"), &cache.head);
        add(&mut grads, "head.w", head_grads.d_weight);
        add(&mut grads, "head.b", head_grads.d_bias);

        // final layer norm receives upstream gradient only on query rows
        let mut d_normed = Tensor2D::zeros(total_rows, d);
        for (i, r) in (total_rows - cfg.horizon..total_rows).enumerate() {
            d_normed.row_mut(r).copy_from_slice(head_grads.d_input.row(i));
        }
        let final_grads =
            layernorm_backward(&d_normed, self.store.get("final_ln.g"), &cache.final_ln);
        add(&mut grads, "final_ln.g", final_grads.d_gain);
        add(&mut grads, "final_ln.b", final_grads.d_bias);
        let mut dx = final_grads.d_input;

        // trunk layers in reverse
        for (layer, lc) in cache.trunk.iter().enumerate().rev() {
            let w1 = self.store.get(&format!("trunk{layer}.mlp.w1"));
            let w2 = self.store.get(&format!("trunk{layer}.mlp.w2"));
            let mlp_grads = mlp_backward(&dx, w1, w2, &lc.mlp);
            add(&mut grads, &format!("trunk{layer}.mlp.w1"), mlp_grads.d_w1);
            add(&mut grads, &format!("trunk{layer}.mlp.b1"), mlp_grads.d_b1);
            add(&mut grads, &format!("trunk{layer}.mlp.w2"), mlp_grads.d_w2);
            add(&mut grads, &format!("trunk{layer}.mlp.b2"), mlp_grads.d_b2);
            let ln2_grads = layernorm_backward(
                &mlp_grads.d_input,
                self.store.get(&format!("trunk{layer}.ln2.g")),
                &lc.ln2,
            );
            add(&mut grads, &format!("trunk{layer}.ln2.g"), ln2_grads.d_gain);
            add(&mut grads, &format!("trunk{layer}.ln2.b"), ln2_grads.d_bias);
            dx.add_assign(&ln2_grads.d_input);

            let weights = self.attention_weights(&format!("trunk{layer}.attn"));
            let attn_grads = mha_backward(&dx, &weights, &lc.attn);
            add(&mut grads, &format!("trunk{layer}.attn.wq"), attn_grads.d_wq);
            add(&mut grads, &format!("trunk{layer}.attn.wk"), attn_grads.d_wk);
            add(&mut grads, &format!("trunk{layer}.attn.wv"), attn_grads.d_wv);
            add(&mut grads, &format!("trunk{layer}.attn.wo"), attn_grads.d_wo);
            let mut d_ln1 = attn_grads.d_q_in;
            d_ln1.add_assign(&attn_grads.d_k_in);
            d_ln1.add_assign(&attn_grads.d_v_in);
            let ln1_grads = layernorm_backward(
                &d_ln1,
                self.store.get(&format!("trunk{layer}.ln1.g")),
                &lc.ln1,
            );
            add(&mut grads, &format!("trunk{layer}.ln1.g"), ln1_grads.d_gain);
            add(&mut grads, &format!("trunk{layer}.ln1.b"), ln1_grads.d_bias);
            dx.add_assign(&ln1_grads.d_input);
        }

        // split trunk input gradient into robot / fused / query blocks
        let use_memory = cache.memory_rows > 0;
        let d_queries = dx.row_slice(total_rows - cfg.horizon, total_rows);
        let mut d_robot;
        let mut d_memory = Tensor2D::zeros(cache.memory_rows.max(1), d);
        if use_memory {
            let weights = self.attention_weights("fuse");
            let fusion = cache.fusion.as_ref().unwrap();
            match cfg.fusion_mode {
                FusionMode::Paper => {
                    d_robot = dx.row_slice(0, cache.robot_rows);
                    let d_fused =
                        dx.row_slice(cache.robot_rows, cache.robot_rows + cache.memory_rows);
                    let fuse_grads = mha_backward(&d_fused, &weights, fusion);
                    add(&mut grads, "fuse.wq", fuse_grads.d_wq);
                    add(&mut grads, "fuse.wk", fuse_grads.d_wk);
                    add(&mut grads, "fuse.wv", fuse_grads.d_wv);
                    add(&mut grads, "fuse.wo", fuse_grads.d_wo);
                    // residual path from memory
                    d_memory = d_fused;
                    d_memory.add_assign(&fuse_grads.d_q_in);
                    d_robot.add_assign(&fuse_grads.d_k_in);
                    d_robot.add_assign(&fuse_grads.d_v_in);
                }
                FusionMode::Standard => {
                    let d_fused = dx.row_slice(0, cache.robot_rows);
                    let fuse_grads = mha_backward(&d_fused, &weights, fusion);
                    add(&mut grads, "fuse.wq", fuse_grads.d_wq);
                    add(&mut grads, "fuse.wk", fuse_grads.d_wk);
                    add(&mut grads, "fuse.wv", fuse_grads.d_wv);
                    add(&mut grads, "fuse.wo", fuse_grads.d_wo);
                    d_robot = d_fused;
                    d_robot.add_assign(&fuse_grads.d_q_in);
                    d_memory = fuse_grads.d_k_in;
                    d_memory.add_assign(&fuse_grads.d_v_in);
                }
            }
        } else {
            d_robot = dx.row_slice(0, cache.robot_rows);
        }

        // query tokens + their stream/position embeddings
        let mut d_stream = Tensor2D::zeros(3, d);
        let mut d_pos = Tensor2D::zeros(MAX_POSITIONS, d);
        for r in 0..d_queries.rows {
            for c in 0..d {
                let v = d_stream.get(STREAM_QUERY, c) + d_queries.get(r, c);
                d_stream.set(STREAM_QUERY, c, v);
                let p = d_pos.get(r, c) + d_queries.get(r, c);
                d_pos.set(r, c, p);
            }
        }
        add(&mut grads, "query_tokens", d_queries);

        // scene-summary rows sit after the embedded observation tokens
        let embedded_rows = cache.robot_segments.len();
        for (i, mlp_cache) in cache.scene_mlps.iter().enumerate() {
            let r = embedded_rows + i;
            let g = mlp_backward(
                &Tensor2D::from_vec(1, d, d_robot.row(r).to_vec()),
                self.store.get("scene_mlp.w1"),
                self.store.get("scene_mlp.w2"),
                mlp_cache,
            );
            add(&mut grads, "scene_mlp.w1", g.d_w1);
            add(&mut grads, "scene_mlp.b1", g.d_b1);
            add(&mut grads, "scene_mlp.w2", g.d_w2);
            add(&mut grads, "scene_mlp.b2", g.d_b2);
        }

        // robot rows: segment/stream/position embeddings + proprio MLP
        let mut d_segment = Tensor2D::zeros(Segment::COUNT, d);
        for (r, seg) in cache.robot_segments.iter().enumerate() {
            let pe_row = cache.robot_pe_rows[r];
            for c in 0..d {
                let v = d_segment.get(seg.index(), c) + d_robot.get(r, c);
                d_segment.set(seg.index(), c, v);
                let s = d_stream.get(STREAM_ROBOT, c) + d_robot.get(r, c);
                d_stream.set(STREAM_ROBOT, c, s);
                let p = d_pos.get(pe_row, c) + d_robot.get(r, c);
                d_pos.set(pe_row, c, p);
            }
            if *seg == Segment::State {
                let d_prop = Tensor2D::from_vec(1, d, d_robot.row(r).to_vec());
                let g = mlp_backward(
                    &d_prop,
                    self.store.get("proprio_mlp.w1"),
                    self.store.get("proprio_mlp.w2"),
                    &cache.proprio_mlp,
                );
                add(&mut grads, "proprio_mlp.w1", g.d_w1);
                add(&mut grads, "proprio_mlp.b1", g.d_b1);
                add(&mut grads, "proprio_mlp.w2", g.d_w2);
                add(&mut grads, "proprio_mlp.b2", g.d_b2);
            }
        }

        // memory rows: segment/stream embeddings, state/sep tokens,
        // mask/trajectory MLPs
        if use_memory {
            let mut d_state = Tensor2D::zeros(1, d);
            let mut d_sep = Tensor2D::zeros(1, d);
            for (r, (seg, kind)) in cache
                .memory_segments
                .iter()
                .zip(&cache.memory_kinds)
                .enumerate()
            {
                let pe_row = cache.memory_pe_rows[r];
                for c in 0..d {
                    let v = d_segment.get(seg.index(), c) + d_memory.get(r, c);
                    d_segment.set(seg.index(), c, v);
                    let s = d_stream.get(STREAM_MEMORY, c) + d_memory.get(r, c);
                    d_stream.set(STREAM_MEMORY, c, s);
                    let p = d_pos.get(pe_row, c) + d_memory.get(r, c);
                    d_pos.set(pe_row, c, p);
                }
                match kind {
                    MemRowKind::Fixed => {}
                    MemRowKind::State => {
                        d_state.add_assign(&Tensor2D::from_vec(1, d, d_memory.row(r).to_vec()))
                    }
                    MemRowKind::Sep => {
                        d_sep.add_assign(&Tensor2D::from_vec(1, d, d_memory.row(r).to_vec()))
                    }
                    MemRowKind::Mask(slot) => {
                        if let Some(mlp_cache) = &cache.mask_mlps[*slot] {
                            let g = mlp_backward(
                                &Tensor2D::from_vec(1, d, d_memory.row(r).to_vec()),
                                self.store.get("mask_mlp.w1"),
                                self.store.get("mask_mlp.w2"),
                                mlp_cache,
                            );
                            add(&mut grads, "mask_mlp.w1", g.d_w1);
                            add(&mut grads, "mask_mlp.b1", g.d_b1);
                            add(&mut grads, "mask_mlp.w2", g.d_w2);
                            add(&mut grads, "mask_mlp.b2", g.d_b2);
                        }
                    }
                    MemRowKind::Traj(slot) => {
                        if let Some(mlp_cache) = &cache.traj_mlps[*slot] {
                            let g = mlp_backward(
                                &Tensor2D::from_vec(1, d, d_memory.row(r).to_vec()),
                                self.store.get("traj_mlp.w1"),
                                self.store.get("traj_mlp.w2"),
                                mlp_cache,
                            );
                            add(&mut grads, "traj_mlp.w1", g.d_w1);
                            add(&mut grads, "traj_mlp.b1", g.d_b1);
                            add(&mut grads, "traj_mlp.w2", g.d_w2);
                            add(&mut grads, "traj_mlp.b2", g.d_b2);
                        }
                    }
                }
            }
            add(&mut grads, "state_token", d_state);
            add(&mut grads, "sep_token", d_sep);
        }
        add(&mut grads, "segment_embed", d_segment);
        add(&mut grads, "stream_embed", d_stream);
        add(&mut grads, "pos_embed", d_pos);

        Ok(Gradients {
            d_memory_tokens: use_memory.then(|| d_memory.clone()),
            params: grads,
        })
    }

    /// Forward only, discarding the cache.
    pub fn predict(&self, obs: &ObservationRaw, memories: &[MemoryRaw]) -> Result<ActionChunk> {
        self.forward(obs, memories).map(|(chunk, _)| chunk)
    }
}

// ---------------------------------------------------------------------------
// retrieval plumbing shared by train and act

/// Retrieve per view, dedupe by entry id (keeping the max score), and
/// encode the parameter-free memory features. `raw_cache` persists the
/// per-entry encodings across calls.
pub fn gather_memories(
    instruction: &str,
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
    cfg: &PolicyConfig,
    raw_cache: &mut HashMap<String, MemoryRaw>,
) -> Result<Vec<MemoryRaw>> {
    if !cfg.use_retrieval {
        return Ok(Vec::new());
    }
    let q = crate::retriever::embed_text(instruction, embedder)?;
    let per_view = retrieve_per_view_embedded(index, &q, &cfg.views, cfg.k_retrieved)?;
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for list in per_view.values() {
        for (id, score) in &list.items {
            let slot = best.entry(id.clone()).or_insert(f64::NEG_INFINITY);
            if *score > *slot {
                *slot = *score;
            }
        }
    }
    let mut out = Vec::with_capacity(best.len());
    for (id, score) in best {
        if !raw_cache.contains_key(&id) {
            let entry = bank
                .get_entry(&id)
                .ok_or_else(|| Error::invariant("retrieval-id", format!("unknown entry {id}")))?;
            raw_cache.insert(id.clone(), encode_memory_raw(entry, score, cfg)?);
        }
        let mut raw = raw_cache.get(&id).unwrap().clone();
        raw.score = score;
        out.push(raw);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// training

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

pub struct Trained {
    pub net: PolicyNet,
    pub report: TrainReport,
}

/// Behavior cloning: seeded shuffling, per-demo retrieval with cached
/// memory encodings, chunked L1 loss, Adam. Deterministic for fixed seeds.
pub fn train(
    demos: &[Demo],
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
    config: &PolicyConfig,
) -> Result<Trained> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let net = PolicyNet::new(config.clone())?;
    train_from(net, demos, bank, index, embedder)
}

pub fn train_from(
    mut net: PolicyNet,
    demos: &[Demo],
    bank: &Bank,
    index: &RetrievalIndex,
    embedder: &EmbedderConfig,
) -> Result<Trained> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = net.config.clone();

    let mut raw_cache: HashMap<String, MemoryRaw> = HashMap::new();
    let mut demo_memories: Vec<Vec<MemoryRaw>> = Vec::with_capacity(demos.len());
    let mut demo_obs: Vec<Vec<ObservationRaw>> = Vec::with_capacity(demos.len());
    for demo in demos {
        demo_memories.push(gather_memories(
            &demo.instruction,
            bank,
            index,
            embedder,
            &cfg,
            &mut raw_cache,
        )?);
        let obs: Result<Vec<ObservationRaw>> = demo
            .observations
            .iter()
            .map(|o| encode_observation_raw(o, &cfg))
            .collect();
        demo_obs.push(obs?);
    }

    let mut samples: Vec<(usize, usize)> = Vec::new();
    for (di, demo) in demos.iter().enumerate() {
        for t in 0..demo.observations.len() {
            samples.push((di, t));
        }
    }

    // transformer-style betas: fast second-moment adaptation matters much
    // more than asymptotics at these step counts
    let hp = AdamParams { lr: cfg.lr, beta1: 0.9, beta2: 0.95, eps: 1e-8 };
    let mut rng = Rng64::new(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let mut loss_trace = Vec::with_capacity(cfg.train_steps);

    for step in 0..cfg.train_steps {
        // linear decay to 10% of the base rate by the final step
        let progress = step as f64 / cfg.train_steps.max(1) as f64;
        let hp = AdamParams { lr: cfg.lr * (1.0 - 0.9 * progress), ..hp };
        let mut batch_grads: BTreeMap<String, Tensor2D> = BTreeMap::new();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            if cursor >= order.len() {
                order = (0..samples.len()).collect();
                rng.shuffle(&mut order);
                cursor = 0;
            }
            let (di, t) = samples[order[cursor]];
            cursor += 1;

            let expert = demos[di].expert_chunk(t, cfg.horizon);
            let (pred, cache) = net.forward(&demo_obs[di][t], &demo_memories[di])?;
            batch_loss += bc_loss(&pred, &expert)?;
            let d_chunk = bc_loss_backward(&pred, &expert);
            let grads = net.backward(&cache, &d_chunk)?;
            for (name, g) in grads.params {
                batch_grads
                    .entry(name)
                    .and_modify(|acc| acc.add_assign(&g))
                    .or_insert(g);
            }
        }
        let scale = 1.0 / cfg.batch_size as f64;
        for g in batch_grads.values_mut() {
            g.scale(scale);
        }
        net.store.adam_step(&batch_grads, &hp)?;
        loss_trace.push(batch_loss * scale);
    }

    let steps = loss_trace.len();
    Ok(Trained {
        net,
        report: TrainReport { loss_trace, steps },
    })
}

// ---------------------------------------------------------------------------
// action selection (temporal ensembling)

/// Executes chunked predictions: every step predicts a fresh chunk and the
/// emitted action averages the overlapping chunk entries with exponential
/// weights w_i = exp(-m * i), normalized to sum to one.
pub struct Ensembler {
    m: f64,
    first_action_only: bool,
    history: Vec<ActionChunk>,
}

impl Ensembler {
    pub fn new(m: f64, first_action_only: bool) -> Self {
        Ensembler {
            m,
            first_action_only,
            history: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Record this step's chunk and return the action to execute.
    pub fn step(&mut self, chunk: ActionChunk) -> Vec<f64> {
        let dof = chunk.dof;
        let horizon = chunk.horizon;
        self.history.push(chunk);
        if self.first_action_only {
            return self.history.last().unwrap().action(0).to_vec();
        }
        let newest = self.history.len() - 1;
        let mut weights = Vec::new();
        let mut entries: Vec<&[f64]> = Vec::new();
        for age in 0..horizon.min(self.history.len()) {
            let chunk = &self.history[newest - age];
            if age < chunk.horizon {
                weights.push((-self.m * age as f64).exp());
                entries.push(chunk.action(age));
            }
        }
        let total: f64 = weights.iter().sum();
        let mut action = vec![0.0f64; dof];
        for (w, entry) in weights.iter().zip(&entries) {
            for (a, v) in action.iter_mut().zip(*entry) {
                *a += (w / total) * v;
            }
        }
        action
    }
}

/// Closed-loop policy driver used by rollouts: retrieval (cached per
/// instruction), forward pass, temporal ensembling.
pub struct PolicyRuntime<'a> {
    pub net: &'a PolicyNet,
    pub bank: &'a Bank,
    pub index: &'a RetrievalIndex,
    pub embedder: &'a EmbedderConfig,
    raw_cache: HashMap<String, MemoryRaw>,
    memories_by_instruction: HashMap<String, Vec<MemoryRaw>>,
    ensembler: Ensembler,
}

impl<'a> PolicyRuntime<'a> {
    pub fn new(
        net: &'a PolicyNet,
        bank: &'a Bank,
        index: &'a RetrievalIndex,
        embedder: &'a EmbedderConfig,
    ) -> Self {
        let ensembler = Ensembler::new(net.config.ensemble_m, net.config.first_action_only);
        PolicyRuntime {
            net,
            bank,
            index,
            embedder,
            raw_cache: HashMap::new(),
            memories_by_instruction: HashMap::new(),
            ensembler,
        }
    }

    /// Clear per-episode state (the chunk history), keeping memory caches.
    pub fn reset(&mut self) {
        self.ensembler.reset();
    }

    /// Number of memories fused for an instruction (diagnostics).
    pub fn memory_count(&mut self, instruction: &str) -> Result<usize> {
        self.ensure_memories(instruction)?;
        Ok(self.memories_by_instruction[instruction].len())
    }

    fn ensure_memories(&mut self, instruction: &str) -> Result<()> {
        if !self.memories_by_instruction.contains_key(instruction) {
            let mems = gather_memories(
                instruction,
                self.bank,
                self.index,
                self.embedder,
                &self.net.config,
                &mut self.raw_cache,
            )?;
            self.memories_by_instruction.insert(instruction.to_string(), mems);
        }
        Ok(())
    }

    pub fn act(&mut self, obs: &RobotObservation) -> Result<Vec<f64>> {
        self.ensure_memories(&obs.instruction)?;
        let memories = &self.memories_by_instruction[&obs.instruction];
        let raw = encode_observation_raw(obs, &self.net.config)?;
        let chunk = self.net.predict(&raw, memories)?;
        Ok(self.ensembler.step(chunk))
    }
}

// ---------------------------------------------------------------------------
// checkpoints

/// Save parameters plus a JSON sidecar of the config.
pub fn save_checkpoint(net: &PolicyNet, dir: &std::path::Path) -> Result<()> {
    net.store.save(dir)?;
    let json = serde_json::to_string_pretty(&net.config)
        .map_err(|e| Error::invariant("checkpoint-config", e.to_string()))?;
    std::fs::write(dir.join("policy.json"), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: &std::path::Path) -> Result<PolicyNet> {
    let config: PolicyConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.join("policy.json"))?)
            .map_err(|e| Error::invariant("checkpoint-config", e.to_string()))?;
    let store = ParameterStore::load(dir)?;
    Ok(PolicyNet { config, store })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn tiny_config() -> PolicyConfig {
        PolicyConfig {
            d_model: 16,
            d_hidden: 16,
            heads: 2,
            layers: 1,
            horizon: 2,
            dof: 2,
            k_retrieved: 1,
            keep_fraction: 0.5,
            grid: 2,
            lr: 1e-3,
            seed: 5,
            views: vec!["front".to_string()],
            ..Default::default()
        }
    }

    pub fn tiny_obs_raw(cfg: &PolicyConfig, seed: u64) -> ObservationRaw {
        let mut rng = Rng64::new(seed);
        ObservationRaw {
            text: encoders::text_tokens("push the red cube", cfg.d_model, cfg.text_seed).unwrap(),
            video: (0..cfg.grid * cfg.grid)
                .map(|_| Token::new((0..cfg.d_model).map(|_| rng.next_gaussian() * 0.3).collect()))
                .collect(),
            scene: vec![(0..cfg.grid * cfg.grid * 3).map(|_| rng.next_gaussian() * 0.3).collect()],
            proprio: (0..cfg.dof).map(|_| rng.range_f64(0.0, 1.0)).collect(),
        }
    }

    pub fn tiny_memory_raw(cfg: &PolicyConfig, id: &str, score: f64, seed: u64) -> MemoryRaw {
        let mut rng = Rng64::new(seed);
        let mut video = TokenSequence::default();
        for _ in 0..4 {
            video.push(
                Token::new((0..cfg.d_model).map(|_| rng.next_gaussian() * 0.3).collect()),
                Segment::Video,
            );
        }
        MemoryRaw {
            entry_id: id.to_string(),
            score,
            text: encoders::text_tokens("push the red cube", cfg.d_model, cfg.text_seed).unwrap(),
            video,
            mask_occupancy: (0..MASK_GRID * MASK_GRID).map(|_| rng.next_f64()).collect(),
            traj_features: (0..encoders::TRAJ_POINTS * 2).map(|_| rng.next_f64()).collect(),
        }
    }
}
