//! Decision-tree policy over response labels.
//!
//! The tree is a prefix trie over label windows. The node for a label
//! sequence `[l1, .., lj]` stores how often each label followed that
//! sequence at the start of a training window. Roots are the opening labels
//! of windows, so the subtree under `Angry` is the tree of dialogues that
//! open with an angry speaker.
//!
//! Inference looks up the longest suffix of the recent label history that
//! exists in the trie, falling back to shorter suffixes and finally to the
//! global distribution of next labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::corpus::{check_window_size, LabelWindow, Turn};
use crate::error::{CoreError, Result};
use crate::label::{Label, NUM_LABELS};

const FORMAT_HEADER: &str = "policy-tree v1";

/// How many recent turns the equal-sampling baseline scans for an emotion.
pub const BASELINE_EMOTION_SCAN: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrieNode {
    counts: BTreeMap<Label, u64>,
    total: u64,
    children: BTreeMap<Label, TrieNode>,
}

impl TrieNode {
    pub fn counts(&self) -> &BTreeMap<Label, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn child(&self, label: Label) -> Option<&TrieNode> {
        self.children.get(&label)
    }

    fn add(&mut self, label: Label, n: u64) {
        *self.counts.entry(label).or_insert(0) += n;
        self.total += n;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTree {
    k: usize,
    roots: BTreeMap<Label, TrieNode>,
    global: TrieNode,
    smoothing: f64,
}

/// Which lookup level produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackoffLevel {
    /// Matched a history suffix of this many labels.
    Suffix(usize),
    /// No suffix matched; the global next-label distribution was used.
    Global,
}

/// Label history available when predicting the next response.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionContext {
    /// Labels of the most recent turns, oldest first.
    pub recent_labels: Vec<Label>,
    /// Labels of the last few turns, oldest first; `None` for turns whose
    /// label is unknown.
    pub recent_turn_labels: Vec<Option<Label>>,
}

impl PredictionContext {
    pub fn from_labels(labels: &[Label]) -> PredictionContext {
        PredictionContext {
            recent_labels: labels.to_vec(),
            recent_turn_labels: tail(labels, BASELINE_EMOTION_SCAN)
                .iter()
                .map(|&l| Some(l))
                .collect(),
        }
    }

    /// Context from the turns preceding the response, keeping the last
    /// `k - 1` labels.
    pub fn from_turns(history: &[Turn], k: usize) -> PredictionContext {
        let labels: Vec<Label> = history.iter().map(|t| t.label).collect();
        let mut ctx = PredictionContext::from_labels(tail(&labels, k.saturating_sub(1)));
        ctx.recent_turn_labels = tail(&labels, BASELINE_EMOTION_SCAN)
            .iter()
            .map(|&l| Some(l))
            .collect();
        ctx
    }
}

fn tail<T>(xs: &[T], n: usize) -> &[T] {
    &xs[xs.len().saturating_sub(n)..]
}

/// The distribution used for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup<'a> {
    pub level: BackoffLevel,
    /// The history suffix that matched (empty for the global level).
    pub prefix: Vec<Label>,
    pub node: &'a TrieNode,
}

impl Lookup<'_> {
    /// `(label, count, probability)` for every observed next label.
    pub fn distribution(&self) -> Vec<(Label, u64, f64)> {
        let total = self.node.total as f64;
        self.node
            .counts
            .iter()
            .map(|(&l, &c)| (l, c, c as f64 / total))
            .collect()
    }
}

impl PolicyTree {
    /// Count every prefix -> next-label transition of every window.
    pub fn build(windows: &[LabelWindow], k: usize) -> Result<PolicyTree> {
        check_window_size(k)?;
        if windows.is_empty() {
            return Err(CoreError::Empty("no label windows to build a tree from".into()));
        }
        let mut tree = PolicyTree::empty(k);
        for w in windows {
            if w.labels.len() != k {
                return Err(CoreError::InvalidArgument(format!(
                    "window at turn {} has {} labels, expected {k}",
                    w.start_turn_index,
                    w.labels.len()
                )));
            }
            tree.insert(&w.labels, 1);
        }
        Ok(tree)
    }

    fn empty(k: usize) -> PolicyTree {
        PolicyTree {
            k,
            roots: BTreeMap::new(),
            global: TrieNode::default(),
            smoothing: 0.0,
        }
    }

    fn insert(&mut self, labels: &[Label], n: u64) {
        let mut node = self.roots.entry(labels[0]).or_default();
        for j in 1..labels.len() {
            node.add(labels[j], n);
            self.global.add(labels[j], n);
            if j + 1 < labels.len() {
                node = node.children.entry(labels[j]).or_default();
            }
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn roots(&self) -> impl Iterator<Item = (Label, &TrieNode)> {
        self.roots.iter().map(|(&l, n)| (l, n))
    }

    /// Global distribution over next labels, pooled across all depths.
    pub fn global(&self) -> &TrieNode {
        &self.global
    }

    /// Additive smoothing applied when sampling; `0.0` (the default) keeps
    /// the raw frequencies.
    pub fn with_smoothing(mut self, alpha: f64) -> PolicyTree {
        self.smoothing = alpha.max(0.0);
        self
    }

    /// Node reached by following `prefix` from its root.
    pub fn node(&self, prefix: &[Label]) -> Option<&TrieNode> {
        let (first, rest) = prefix.split_first()?;
        let mut node = self.roots.get(first)?;
        for l in rest {
            node = node.children.get(l)?;
        }
        Some(node)
    }

    /// Longest matching history suffix, then the global distribution.
    pub fn lookup(&self, ctx: &PredictionContext) -> Result<Lookup<'_>> {
        let history = tail(&ctx.recent_labels, self.k - 1);
        for len in (1..=history.len()).rev() {
            let suffix = &history[history.len() - len..];
            if let Some(node) = self.node(suffix).filter(|n| n.total > 0) {
                log::debug!("policy lookup matched a {len}-label suffix");
                return Ok(Lookup {
                    level: BackoffLevel::Suffix(len),
                    prefix: suffix.to_vec(),
                    node,
                });
            }
        }
        if self.global.total == 0 {
            return Err(CoreError::UntrainedPolicy);
        }
        log::debug!("policy lookup fell back to the global distribution");
        Ok(Lookup {
            level: BackoffLevel::Global,
            prefix: Vec::new(),
            node: &self.global,
        })
    }

    /// Most frequent next label; ties go to the lowest label id.
    pub fn predict_argmax(&self, ctx: &PredictionContext) -> Result<Label> {
        if ctx.recent_labels.is_empty() {
            return Err(CoreError::InvalidArgument("prediction needs at least one recent label".into()));
        }
        Ok(argmax_count(self.lookup(ctx)?.node))
    }

    /// Next label drawn in proportion to the matched node's counts.
    pub fn predict_sampled<R: Rng + ?Sized>(&self, ctx: &PredictionContext, rng: &mut R) -> Result<Label> {
        if ctx.recent_labels.is_empty() {
            return Err(CoreError::InvalidArgument("prediction needs at least one recent label".into()));
        }
        let node = self.lookup(ctx)?.node;
        Ok(self.sample_node(node, rng))
    }

    pub fn sample_node<R: Rng + ?Sized>(&self, node: &TrieNode, rng: &mut R) -> Label {
        if self.smoothing > 0.0 {
            let denom = node.total as f64 + self.smoothing * NUM_LABELS as f64;
            let mut u = rng.gen::<f64>() * denom;
            for l in Label::all() {
                let w = node.counts.get(&l).copied().unwrap_or(0) as f64 + self.smoothing;
                if u < w {
                    return l;
                }
                u -= w;
            }
            return Label::NEUTRAL;
        }
        let mut u = rng.gen_range(0..node.total);
        for (&l, &c) in &node.counts {
            if u < c {
                return l;
            }
            u -= c;
        }
        unreachable!("node total equals the sum of its counts")
    }

    /// Render the subtree under `root` as a Graphviz digraph.
    ///
    /// `max_depth` limits the number of edge levels shown. Edges whose
    /// probability is below `min_prob` are hidden along with their subtree.
    pub fn export_dot(&self, root: Label, max_depth: usize, min_prob: f64) -> Result<String> {
        let node = self
            .roots
            .get(&root)
            .ok_or_else(|| CoreError::UnknownRoot(root.name().to_string()))?;
        let mut out = String::new();
        let _ = writeln!(out, "digraph policy_tree {{");
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  node [shape=box, style=rounded];");
        let _ = writeln!(out, "  n0 [label=\"{}\"];", root.name());
        let mut next_id = 1;
        let depth_limit = max_depth.min(self.k - 1);
        dot_children(&mut out, node, 0, 1, depth_limit, min_prob, &mut next_id);
        out.push_str("}\n");
        Ok(out)
    }

    /// Versioned text listing of `prefix<TAB>child<TAB>count` rows, with
    /// label ids.
    pub fn to_text(&self) -> String {
        let mut out = format!("{FORMAT_HEADER}\nk {}\n", self.k);
        let mut prefix = Vec::new();
        for (&l, node) in &self.roots {
            prefix.push(l);
            write_rows(&mut out, &mut prefix, node);
            prefix.pop();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PolicyTree> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, message: String| CoreError::Parse { line, message };
        match lines.next() {
            Some((_, FORMAT_HEADER)) => {}
            _ => return Err(bad(1, format!("expected header `{FORMAT_HEADER}`"))),
        }
        let k = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("k ")
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| bad(2, "expected `k <window size>`".into()))?,
            None => return Err(bad(2, "missing window size".into())),
        };
        check_window_size(k)?;
        let mut tree = PolicyTree::empty(k);
        let label = |line: usize, s: &str| -> Result<Label> {
            s.parse::<usize>()
                .ok()
                .and_then(Label::from_id)
                .ok_or_else(|| bad(line, format!("bad label id `{s}`")))
        };
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(lineno, "expected 3 tab-separated fields".into()));
            }
            let prefix = fields[0]
                .split_whitespace()
                .map(|s| label(lineno, s))
                .collect::<Result<Vec<_>>>()?;
            if prefix.is_empty() || prefix.len() >= k {
                return Err(bad(lineno, format!("prefix length must be in 1..{k}")));
            }
            let child = label(lineno, fields[1])?;
            let count: u64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| bad(lineno, format!("bad count: {e}")))?;
            let mut node = tree.roots.entry(prefix[0]).or_default();
            for l in &prefix[1..] {
                node = node.children.entry(*l).or_default();
            }
            node.add(child, count);
            tree.global.add(child, count);
        }
        tree.validate()?;
        Ok(tree)
    }

    /// Every child node's total must equal the parent's count for it.
    fn validate(&self) -> Result<()> {
        fn check(node: &TrieNode) -> bool {
            node.children
                .iter()
                .all(|(l, child)| node.counts.get(l) == Some(&child.total) && check(child))
        }
        if self.roots.values().all(check) {
            Ok(())
        } else {
            Err(CoreError::Parse {
                line: 0,
                message: "inconsistent counts between a node and its parent".into(),
            })
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PolicyTree> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        PolicyTree::from_text(&text)
    }
}

fn argmax_count(node: &TrieNode) -> Label {
    let mut best: Option<(Label, u64)> = None;
    for (&l, &c) in &node.counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.expect("matched nodes are non-empty").0
}

fn write_rows(out: &mut String, prefix: &mut Vec<Label>, node: &TrieNode) {
    let ids: Vec<String> = prefix.iter().map(|l| l.id().to_string()).collect();
    let ids = ids.join(" ");
    for (l, c) in &node.counts {
        let _ = writeln!(out, "{ids}\t{}\t{c}", l.id());
    }
    for (&l, child) in &node.children {
        prefix.push(l);
        write_rows(out, prefix, child);
        prefix.pop();
    }
}

fn dot_children(
    out: &mut String,
    node: &TrieNode,
    node_id: usize,
    depth: usize,
    max_depth: usize,
    min_prob: f64,
    next_id: &mut usize,
) {
    if depth > max_depth {
        return;
    }
    for (&l, &c) in &node.counts {
        let p = c as f64 / node.total as f64;
        if p < min_prob {
            continue;
        }
        let id = *next_id;
        *next_id += 1;
        let _ = writeln!(out, "  n{id} [label=\"{}\"];", l.name());
        let _ = writeln!(out, "  n{node_id} -> n{id} [label=\"{p:.2}\"];");
        if let Some(child) = node.children.get(&l) {
            dot_children(out, child, id, depth + 1, max_depth, min_prob, next_id);
        }
    }
}

/// Candidates of the equal-sampling baseline: the eight intents plus the
/// most recent emotion among the last three turns (`Neutral` excluded).
pub fn equal_sampling_candidates(ctx: &PredictionContext) -> Vec<Label> {
    let mut candidates: Vec<Label> = Label::intents().collect();
    let recent_emotion = tail(&ctx.recent_turn_labels, BASELINE_EMOTION_SCAN)
        .iter()
        .rev()
        .flatten()
        .find(|l| l.is_emotion());
    if let Some(&e) = recent_emotion {
        candidates.push(e);
    }
    candidates
}

/// Uniform draw from [`equal_sampling_candidates`].
pub fn predict_equally_sampled<R: Rng + ?Sized>(ctx: &PredictionContext, rng: &mut R) -> Label {
    let candidates = equal_sampling_candidates(ctx);
    candidates[rng.gen_range(0..candidates.len())]
}
