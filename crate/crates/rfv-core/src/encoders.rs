//! Token construction: frame featurization, text tokens, token merging
//! (bipartite soft matching), mask/trajectory encoders, and memory
//! sequence assembly.
//!
//! Tokens carry a `size` weight counting how many source tokens were
//! merged into them; merging is a size-weighted mean, so the global
//! size-weighted mean of a token population is conserved.

use serde::{Deserialize, Serialize};

use crate::bank::{AffordanceMask, HandTrajectory, VideoClip};
use crate::error::{Error, Result};
use crate::nncore::{ops, seeded_init, InitScheme, Tensor2D};
use crate::rng::{fnv1a, Rng64};

pub const DEFAULT_GRID: usize = 4;
pub const DEFAULT_D_MODEL: usize = 64;
pub const DEFAULT_KEEP_FRACTION: f64 = 0.1;
pub const MASK_GRID: usize = 16;
pub const TRAJ_POINTS: usize = 16;

/// Role tag per token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Text,
    State,
    Video,
    Mask,
    Traj,
    Sep,
}

impl Segment {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        match self {
            Segment::Text => 0,
            Segment::State => 1,
            Segment::Video => 2,
            Segment::Mask => 3,
            Segment::Traj => 4,
            Segment::Sep => 5,
        }
    }
}

/// One model token: a d_model vector plus its merge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub vector: Vec<f64>,
    pub size: usize,
}

impl Token {
    pub fn new(vector: Vec<f64>) -> Self {
        Token { vector, size: 1 }
    }
}

/// Ordered tokens with absolute positions and segment roles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub positions: Vec<usize>,
    pub segments: Vec<Segment>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn push(&mut self, token: Token, segment: Segment) {
        self.positions.push(self.tokens.len());
        self.tokens.push(token);
        self.segments.push(segment);
    }

    /// Append another sequence, renumbering positions to stay contiguous.
    pub fn extend(&mut self, other: &TokenSequence) {
        for (token, segment) in other.tokens.iter().zip(&other.segments) {
            self.push(token.clone(), *segment);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.positions.len() || self.tokens.len() != self.segments.len() {
            return Err(Error::invariant("tokenseq-lengths", "parallel arrays differ in length"));
        }
        for pair in self.positions.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::invariant("tokenseq-positions", "positions must strictly increase"));
            }
        }
        Ok(())
    }
}

/// Tokenized representation of one retrieved entry plus its relevance.
#[derive(Debug, Clone)]
pub struct MemoryFeature {
    pub entry_id: String,
    pub sequence: TokenSequence,
    pub score: f64,
}

// ---------------------------------------------------------------------------
// frame featurizer

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub grid: usize,
    pub d_model: usize,
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            grid: DEFAULT_GRID,
            d_model: DEFAULT_D_MODEL,
            seed: 7002,
        }
    }
}

/// Per-cell channel means of a frame over a g x g grid, row-major cells.
/// Cells partition the image by integer boundaries floor(i*W/g).
pub fn grid_cell_means(frame: &crate::bank::Frame, grid: usize) -> Vec<[f64; 3]> {
    let (w, h) = (frame.width, frame.height);
    let bound = |i: usize, extent: usize| i * extent / grid;
    let mut out = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        let (y0, y1) = (bound(gy, h), bound(gy + 1, h));
        for gx in 0..grid {
            let (x0, x1) = (bound(gx, w), bound(gx + 1, w));
            let mut acc = [0.0f64; 3];
            let count = (x1 - x0) * (y1 - y0);
            for y in y0..y1 {
                for x in x0..x1 {
                    let base = (y * w + x) * frame.channels;
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += f64::from(frame.data[base + c]);
                    }
                }
            }
            if count > 0 {
                for a in &mut acc {
                    *a /= count as f64;
                }
            }
            out.push(acc);
        }
    }
    out
}

/// The fixed seeded 3 -> d_model projection applied to cell means.
pub fn featurizer_projection(config: &FeaturizerConfig) -> Tensor2D {
    seeded_init(3, config.d_model, InitScheme::UniformScaled, config.seed)
}

/// Toy featurizer: one token per grid cell per frame, vector = projected
/// channel means (intensities scaled to [0, 1] first).
pub fn frame_features(clip: &VideoClip, config: &FeaturizerConfig) -> Result<Vec<Vec<Token>>> {
    if clip.frames.is_empty() {
        return Err(Error::invariant("clip-frames", "featurizer needs a non-empty clip"));
    }
    let proj = featurizer_projection(config);
    Ok(clip
        .frames
        .iter()
        .map(|frame| {
            grid_cell_means(frame, config.grid)
                .into_iter()
                .map(|mean| {
                    let mut v = vec![0.0f64; config.d_model];
                    for (c, m) in mean.iter().enumerate() {
                        // center intensities so deviations from mid-gray,
                        // not absolute brightness, carry the signal
                        let m = (m / 255.0 - 0.5) * 2.0;
                        for (vi, p) in v.iter_mut().zip(proj.row(c)) {
                            *vi += m * p;
                        }
                    }
                    Token::new(v)
                })
                .collect()
        })
        .collect())
}

/// Pass ingested per-frame feature vectors through verbatim, one token per
/// frame. Dimensions must match d_model.
pub fn frame_features_from_ingested(features: &[Vec<f32>], d_model: usize) -> Result<Vec<Vec<Token>>> {
    features
        .iter()
        .map(|f| {
            if f.len() != d_model {
                return Err(Error::DimMismatch {
                    context: "ingested frame features vs d_model",
                    got: f.len(),
                    expected: d_model,
                });
            }
            Ok(vec![Token::new(f.iter().map(|&v| f64::from(v)).collect())])
        })
        .collect()
}

/// Deterministic per-word text tokens: each word hashes to a fixed seeded
/// vector. Not learned; the trunk learns on top of them.
pub fn text_tokens(text: &str, d_model: usize, seed: u64) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for word in text
        .to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let mut rng = Rng64::new(seed ^ fnv1a(word.as_bytes()));
        let v = (0..d_model).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        out.push(Token::new(v));
    }
    if out.is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// token merging (bipartite soft matching)

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < 1e-30 || nb < 1e-30 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One proposed merge: token `a_index` of set A into token `b_index` of B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergePair {
    pub a_index: usize,
    pub b_index: usize,
    pub similarity: f64,
}

/// Each A token proposes its most cosine-similar B partner (ties to the
/// lower B index), ranked by similarity descending (ties to the lower A
/// index).
pub fn tome_proposals(a: &[Token], b: &[Token]) -> Vec<MergePair> {
    let mut proposals: Vec<MergePair> = a
        .iter()
        .enumerate()
        .map(|(ai, at)| {
            let mut best = MergePair {
                a_index: ai,
                b_index: 0,
                similarity: f64::NEG_INFINITY,
            };
            for (bi, bt) in b.iter().enumerate() {
                let sim = cosine(&at.vector, &bt.vector);
                if sim > best.similarity {
                    best.b_index = bi;
                    best.similarity = sim;
                }
            }
            best
        })
        .collect();
    proposals.sort_by(|x, y| {
        y.similarity
            .partial_cmp(&x.similarity)
            .unwrap()
            .then(x.a_index.cmp(&y.a_index))
    });
    proposals
}

fn weighted_merge(tokens: &[&Token]) -> Token {
    let total: usize = tokens.iter().map(|t| t.size).sum();
    let dim = tokens[0].vector.len();
    let mut v = vec![0.0f64; dim];
    for t in tokens {
        let w = t.size as f64;
        for (acc, x) in v.iter_mut().zip(&t.vector) {
            *acc += w * x;
        }
    }
    for acc in &mut v {
        *acc /= total as f64;
    }
    Token { vector: v, size: total }
}

/// Merge the `r` highest-similarity proposals between two adjacent frames'
/// token sets. Output order: B tokens (merged results in place), then
/// unmatched A tokens in A order.
pub fn tome_merge_step(a: &[Token], b: &[Token], r: usize) -> Result<Vec<Token>> {
    tome_merge_step_detailed(a, b, r).map(|(tokens, _)| tokens)
}

pub fn tome_merge_step_detailed(
    a: &[Token],
    b: &[Token],
    r: usize,
) -> Result<(Vec<Token>, Vec<MergePair>)> {
    if r >= a.len().min(b.len()) && r > 0 {
        return Err(Error::RTooLarge { r, a: a.len(), b: b.len() });
    }
    let kept: Vec<MergePair> = tome_proposals(a, b).into_iter().take(r).collect();
    let merged_a: Vec<usize> = kept.iter().map(|p| p.a_index).collect();

    let mut out = Vec::with_capacity(a.len() + b.len() - r);
    for (bi, bt) in b.iter().enumerate() {
        let partners: Vec<&Token> = kept
            .iter()
            .filter(|p| p.b_index == bi)
            .map(|p| &a[p.a_index])
            .collect();
        if partners.is_empty() {
            out.push(bt.clone());
        } else {
            let mut group = vec![bt];
            group.extend(partners);
            out.push(weighted_merge(&group));
        }
    }
    for (ai, at) in a.iter().enumerate() {
        if !merged_a.contains(&ai) {
            out.push(at.clone());
        }
    }
    Ok((out, kept))
}

/// Final-resort reduction used only when the bipartite step cannot legally
/// remove more tokens: merge the most cosine-similar pair in place.
fn merge_closest_pair(tokens: &mut Vec<Token>) {
    debug_assert!(tokens.len() >= 2);
    let mut best = (0usize, 1usize, f64::NEG_INFINITY);
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len() {
            let sim = cosine(&tokens[i].vector, &tokens[j].vector);
            if sim > best.2 {
                best = (i, j, sim);
            }
        }
    }
    let merged = weighted_merge(&[&tokens[best.0], &tokens[best.1]]);
    tokens[best.0] = merged;
    tokens.remove(best.1);
}

/// Repeatedly merge across adjacent frame pairs (left-to-right passes)
/// until exactly `ceil(keep_fraction * N)` tokens remain. Total size
/// weight is conserved.
pub fn reduce_tokens(frames: &[Vec<Token>], keep_fraction: f64) -> Result<TokenSequence> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invariant(
            "keep-fraction",
            format!("keep_fraction {keep_fraction} outside (0, 1]"),
        ));
    }
    let mut groups: Vec<Vec<Token>> = frames.iter().filter(|f| !f.is_empty()).cloned().collect();
    let n_total: usize = groups.iter().map(Vec::len).sum();
    if n_total == 0 {
        return Err(Error::invariant("reduce-empty", "no tokens to reduce"));
    }
    let target = ((keep_fraction * n_total as f64).ceil() as usize).max(1);

    let mut count = n_total;
    while count > target {
        if groups.len() >= 2 {
            let mut next: Vec<Vec<Token>> = Vec::with_capacity(groups.len() / 2 + 1);
            let mut iter = groups.into_iter();
            while let Some(a) = iter.next() {
                match iter.next() {
                    Some(b) => {
                        let allowed = a.len().min(b.len()).saturating_sub(1);
                        let r = allowed.min(count - target);
                        let merged = tome_merge_step(&a, &b, r)?;
                        count -= r;
                        next.push(merged);
                    }
                    None => next.push(a),
                }
            }
            groups = next;
        } else {
            let group = &mut groups[0];
            let half = group.len() / 2;
            let allowed = half.min(group.len() - half).saturating_sub(1);
            let r = allowed.min(count - target);
            if r > 0 {
                let (a, b) = group.split_at(half);
                let merged = tome_merge_step(a, b, r)?;
                *group = merged;
                count -= r;
            } else {
                merge_closest_pair(group);
                count -= 1;
            }
        }
    }

    let mut seq = TokenSequence::default();
    for group in groups {
        for token in group {
            seq.push(token, Segment::Video);
        }
    }
    debug_assert_eq!(seq.len(), target);
    Ok(seq)
}

// ---------------------------------------------------------------------------
// mask and trajectory encoders

/// Fractional foreground coverage of the mask over a fixed grid (row-major
/// cells; empty cells, possible when the mask is smaller than the grid,
/// read 0).
pub fn mask_occupancy(mask: &AffordanceMask, grid: usize) -> Result<Vec<f64>> {
    let bitmap = mask.to_bitmap()?;
    let (w, h) = (mask.width, mask.height);
    let bound = |i: usize, extent: usize| i * extent / grid;
    let mut out = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        let (y0, y1) = (bound(gy, h), bound(gy + 1, h));
        for gx in 0..grid {
            let (x0, x1) = (bound(gx, w), bound(gx + 1, w));
            let count = (x1 - x0) * (y1 - y0);
            if count == 0 {
                out.push(0.0);
                continue;
            }
            let mut fg = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    if bitmap[y * w + x] != 0 {
                        fg += 1;
                    }
                }
            }
            out.push(fg as f64 / count as f64);
        }
    }
    Ok(out)
}

/// Resample the trajectory polyline to `n` points at uniform arc-length
/// spacing (endpoints included).
pub fn resample_arc_length(traj: &HandTrajectory, n: usize) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = traj.points.iter().map(|p| (p.x, p.y)).collect();
    if pts.len() < 2 {
        return Err(Error::TooFewPoints { got: pts.len(), need: 2 });
    }
    let mut cumulative = vec![0.0f64];
    for pair in pts.windows(2) {
        let d = ((pair[1].0 - pair[0].0).powi(2) + (pair[1].1 - pair[0].1).powi(2)).sqrt();
        cumulative.push(cumulative.last().unwrap() + d);
    }
    let total = *cumulative.last().unwrap();
    if total == 0.0 {
        return Ok(vec![pts[0]; n]);
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for j in 0..n {
        let s = total * j as f64 / (n - 1) as f64;
        while seg + 1 < cumulative.len() - 1 && cumulative[seg + 1] < s {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let t = if seg_len > 0.0 { (s - cumulative[seg]) / seg_len } else { 0.0 };
        out.push((
            pts[seg].0 + t * (pts[seg + 1].0 - pts[seg].0),
            pts[seg].1 + t * (pts[seg + 1].1 - pts[seg].1),
        ));
    }
    Ok(out)
}

/// Trajectory MLP input: 16 resampled points, coordinates normalized to
/// [0, 1] by the frame dimensions, interleaved (x, y).
pub fn trajectory_features(traj: &HandTrajectory, width: usize, height: usize) -> Result<Vec<f64>> {
    if !traj.smoothed {
        return Err(Error::invariant(
            "traj-smoothed",
            "trajectory encoder requires a smoothed trajectory",
        ));
    }
    let pts = resample_arc_length(traj, TRAJ_POINTS)?;
    let mut flat = Vec::with_capacity(TRAJ_POINTS * 2);
    for (x, y) in pts {
        flat.push(x / width as f64);
        flat.push(y / height as f64);
    }
    Ok(flat)
}

/// Inference-path mask encoder: occupancy grid through a 2-layer MLP,
/// yielding one token. Training runs the same features through nncore
/// directly so gradients reach the weights.
pub fn encode_mask(
    mask: &AffordanceMask,
    w1: &Tensor2D,
    b1: &Tensor2D,
    w2: &Tensor2D,
    b2: &Tensor2D,
) -> Result<Token> {
    let occ = mask_occupancy(mask, MASK_GRID)?;
    let input = Tensor2D::from_vec(1, occ.len(), occ);
    let (out, _) = ops::mlp_forward(&input, w1, b1, w2, b2)?;
    Ok(Token::new(out.data))
}

/// Inference-path trajectory encoder; see [`encode_mask`].
pub fn encode_trajectory(
    traj: &HandTrajectory,
    width: usize,
    height: usize,
    w1: &Tensor2D,
    b1: &Tensor2D,
    w2: &Tensor2D,
    b2: &Tensor2D,
) -> Result<Token> {
    let flat = trajectory_features(traj, width, height)?;
    let input = Tensor2D::from_vec(1, flat.len(), flat);
    let (out, _) = ops::mlp_forward(&input, w1, b1, w2, b2)?;
    Ok(Token::new(out.data))
}

// ---------------------------------------------------------------------------
// memory assembly

/// Per-entry layout: [TEXT..][STATE][VIDEO..][MASK..][TRAJ..], positions
/// 0..len-1. The state token is a single learned vector shared across
/// entries.
pub fn assemble_memory(
    text: &[Token],
    video: &TokenSequence,
    mask: &[Token],
    traj: &[Token],
    state_token: &Token,
) -> Result<TokenSequence> {
    let d = state_token.vector.len();
    let check = |tokens: &[Token]| -> Result<()> {
        for t in tokens {
            if t.vector.len() != d {
                return Err(Error::DimMismatch {
                    context: "memory token dims",
                    got: t.vector.len(),
                    expected: d,
                });
            }
        }
        Ok(())
    };
    check(text)?;
    check(&video.tokens)?;
    check(mask)?;
    check(traj)?;

    let mut seq = TokenSequence::default();
    for t in text {
        seq.push(t.clone(), Segment::Text);
    }
    seq.push(state_token.clone(), Segment::State);
    for t in &video.tokens {
        seq.push(t.clone(), Segment::Video);
    }
    for t in mask {
        seq.push(t.clone(), Segment::Mask);
    }
    for t in traj {
        seq.push(t.clone(), Segment::Traj);
    }
    Ok(seq)
}

/// Join memory sequences in canonical order (score descending, entry_id
/// ascending) with one SEP token between consecutive entries; positions
/// are reassigned globally.
pub fn concat_memories(memories: &[MemoryFeature], sep_token: &Token) -> TokenSequence {
    let mut order: Vec<usize> = (0..memories.len()).collect();
    order.sort_by(|&a, &b| {
        memories[b]
            .score
            .partial_cmp(&memories[a].score)
            .unwrap()
            .then_with(|| memories[a].entry_id.cmp(&memories[b].entry_id))
    });
    let mut seq = TokenSequence::default();
    for (rank, &idx) in order.iter().enumerate() {
        if rank > 0 {
            seq.push(sep_token.clone(), Segment::Sep);
        }
        seq.extend(&memories[idx].sequence);
    }
    seq
}
