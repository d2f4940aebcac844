//! Kripke structures, flatness analysis, simple-loop enumeration, and
//! path-schema skeletons for flat structures.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Errors raised while loading or analysing a structure.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: duplicate state `{name}`")]
    DuplicateState { line: usize, name: String },
    #[error("line {line}: unknown state `{name}` referenced in edge")]
    UnknownState { line: usize, name: String },
    #[error("no state is marked `init`")]
    NoInit,
    #[error("line {line}: more than one state marked `init`")]
    MultipleInit { line: usize },
    #[error("state `{state}` has no outgoing edge; runs are infinite")]
    DeadEnd { state: String },
    #[error("structure is not flat: state `{state}` lies on two simple loops")]
    NotFlat { state: String },
}

/// A finite labelled transition graph with a single initial state.
///
/// Every state has at least one outgoing edge and every state is reachable
/// from the initial state; both are enforced at load time.
#[derive(Debug, Clone)]
pub struct KripkeStructure {
    names: Vec<String>,
    index: HashMap<String, usize>,
    initial: usize,
    /// Successors per state, sorted by successor name.
    succs: Vec<Vec<usize>>,
    labels: Vec<BTreeSet<String>>,
}

/// A simple loop: a cycle visiting pairwise-distinct states, canonicalized
/// by rotating the state with the smallest name to the front.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimpleLoop {
    pub path: Vec<usize>,
}

/// Flatness verdict. The negative case carries a state together with two
/// distinct simple loops through it.
#[derive(Debug, Clone)]
pub enum Flatness {
    Flat,
    NotFlat {
        state: usize,
        loop_a: SimpleLoop,
        loop_b: SimpleLoop,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SegmentKind {
    Row,
    Loop,
}

/// One row or loop of a path-schema skeleton.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Segment {
    pub kind: SegmentKind,
    pub path: Vec<usize>,
}

/// An alternation of rows and loops, ending in a loop. A skeleton together
/// with one positive iteration count per non-final loop denotes a single run:
/// a non-final `Loop(u)` with count `n` contributes `u` repeated `n` times,
/// a `Row(w)` contributes `w` once, and the final loop repeats forever. The
/// segment following a non-final loop starts at the loop's head state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PathSchemaSkeleton {
    pub segments: Vec<Segment>,
}

impl PathSchemaSkeleton {
    /// Number of non-final loop segments (one count is needed per entry).
    pub fn loop_count(&self) -> usize {
        self.segments[..self.segments.len() - 1]
            .iter()
            .filter(|s| s.kind == SegmentKind::Loop)
            .count()
    }

    pub fn final_loop(&self) -> &[usize] {
        &self.segments.last().expect("skeleton has segments").path
    }

    /// Expand with the given per-loop counts into a (prefix, cycle) lasso.
    /// `counts` must hold one value `>= 1` per non-final loop, in order.
    pub fn expand(&self, counts: &[u64]) -> (Vec<usize>, Vec<usize>) {
        assert_eq!(counts.len(), self.loop_count(), "one count per non-final loop");
        let mut prefix = Vec::new();
        let mut it = counts.iter();
        for seg in &self.segments[..self.segments.len() - 1] {
            match seg.kind {
                SegmentKind::Row => prefix.extend_from_slice(&seg.path),
                SegmentKind::Loop => {
                    let n = *it.next().expect("count");
                    assert!(n >= 1, "loop counts are positive");
                    for _ in 0..n {
                        prefix.extend_from_slice(&seg.path);
                    }
                }
            }
        }
        (prefix, self.final_loop().to_vec())
    }

    /// Flattened state sequence, used for deterministic ordering.
    pub fn flat_states(&self) -> Vec<usize> {
        self.segments.iter().flat_map(|s| s.path.iter().copied()).collect()
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.path.len()).sum()
    }
}

/// Paper-style decomposition of a concrete lasso run: maximal loop chunks
/// `u^n` interleaved with row chunks taken once, ending in the loop repeated
/// forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoDecomposition {
    /// `(path, n)` chunks; `n >= 2` means the simple loop `path` iterated
    /// `n` times, `n == 1` is a path taken once.
    pub chunks: Vec<(Vec<usize>, u64)>,
    pub final_loop: Vec<usize>,
}

impl fmt::Display for KripkeStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in self.names.iter().enumerate() {
            write!(f, "state {name}")?;
            if !self.labels[i].is_empty() {
                write!(f, " label")?;
                for p in &self.labels[i] {
                    write!(f, " {p}")?;
                }
            }
            if i == self.initial {
                write!(f, " init")?;
            }
            writeln!(f)?;
        }
        for (s, ts) in self.succs.iter().enumerate() {
            for &t in ts {
                writeln!(f, "edge {} -> {}", self.names[s], self.names[t])?;
            }
        }
        Ok(())
    }
}

impl KripkeStructure {
    /// Build a structure programmatically. States are created in the order
    /// given; `edges` refer to state names. Applies the same checks as the
    /// text parser (dead ends rejected, unreachable states pruned).
    pub fn build(
        states: &[(&str, &[&str])],
        initial: &str,
        edges: &[(&str, &str)],
    ) -> Result<(Self, Vec<String>), ModelError> {
        let mut src = String::new();
        for (name, props) in states {
            src.push_str("state ");
            src.push_str(name);
            if !props.is_empty() {
                src.push_str(" label");
                for p in *props {
                    src.push(' ');
                    src.push_str(p);
                }
            }
            if *name == initial {
                src.push_str(" init");
            }
            src.push('\n');
        }
        for (a, b) in edges {
            src.push_str(&format!("edge {a} -> {b}\n"));
        }
        Self::parse(&src)
    }

    /// Parse the textual structure format. Returns the structure and any
    /// warnings (currently: pruned unreachable states).
    ///
    /// Grammar, one item per line: `state <id> [label p q ...] [init]`,
    /// `edge <id> -> <id>`, `#` comments and blank lines.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>), ModelError> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut labels: Vec<BTreeSet<String>> = Vec::new();
        let mut initial: Option<(usize, usize)> = None; // (state, line)
        let mut edge_decls: Vec<(String, String, usize)> = Vec::new();

        let ident_ok = |s: &str| {
            let mut cs = s.chars();
            matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
                && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
        };
        let col_of = |line: &str, tok_idx: usize| -> usize {
            // byte offset of the tok_idx-th whitespace-separated token, 1-based
            let mut seen = 0usize;
            let mut in_tok = false;
            for (i, c) in line.char_indices() {
                if c.is_whitespace() {
                    in_tok = false;
                } else if !in_tok {
                    if seen == tok_idx {
                        return i + 1;
                    }
                    seen += 1;
                    in_tok = true;
                }
            }
            line.len() + 1
        };

        for (lno, raw) in text.lines().enumerate() {
            let line_no = lno + 1;
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            match toks[0] {
                "state" => {
                    if toks.len() < 2 {
                        return Err(ModelError::Syntax {
                            line: line_no,
                            col: col_of(line, 0),
                            msg: "expected `state <id>`".into(),
                        });
                    }
                    let name = toks[1];
                    if !ident_ok(name) {
                        return Err(ModelError::Syntax {
                            line: line_no,
                            col: col_of(line, 1),
                            msg: format!("invalid state identifier `{name}`"),
                        });
                    }
                    if index.contains_key(name) {
                        return Err(ModelError::DuplicateState { line: line_no, name: name.into() });
                    }
                    let id = names.len();
                    index.insert(name.to_string(), id);
                    names.push(name.to_string());
                    labels.push(BTreeSet::new());

                    let mut rest = &toks[2..];
                    if rest.first() == Some(&"label") {
                        rest = &rest[1..];
                        while let Some(&p) = rest.first() {
                            if p == "init" {
                                break;
                            }
                            if !ident_ok(p) {
                                return Err(ModelError::Syntax {
                                    line: line_no,
                                    col: col_of(line, toks.len() - rest.len()),
                                    msg: format!("invalid proposition `{p}`"),
                                });
                            }
                            labels[id].insert(p.to_string());
                            rest = &rest[1..];
                        }
                    }
                    match rest {
                        [] => {}
                        ["init"] => {
                            if initial.is_some() {
                                return Err(ModelError::MultipleInit { line: line_no });
                            }
                            initial = Some((id, line_no));
                        }
                        _ => {
                            return Err(ModelError::Syntax {
                                line: line_no,
                                col: col_of(line, toks.len() - rest.len()),
                                msg: format!("unexpected token `{}`", rest[0]),
                            });
                        }
                    }
                }
                "edge" => {
                    if toks.len() != 4 || toks[2] != "->" {
                        return Err(ModelError::Syntax {
                            line: line_no,
                            col: col_of(line, 0),
                            msg: "expected `edge <id> -> <id>`".into(),
                        });
                    }
                    edge_decls.push((toks[1].to_string(), toks[3].to_string(), line_no));
                }
                other => {
                    return Err(ModelError::Syntax {
                        line: line_no,
                        col: col_of(line, 0),
                        msg: format!("expected `state` or `edge`, found `{other}`"),
                    });
                }
            }
        }

        let (initial, _) = initial.ok_or(ModelError::NoInit)?;
        let mut succ_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); names.len()];
        for (a, b, line) in &edge_decls {
            let &ia = index
                .get(a)
                .ok_or_else(|| ModelError::UnknownState { line: *line, name: a.clone() })?;
            let &ib = index
                .get(b)
                .ok_or_else(|| ModelError::UnknownState { line: *line, name: b.clone() })?;
            succ_sets[ia].insert(ib);
        }

        // Prune states unreachable from the initial state, with a warning.
        let mut reach = vec![false; names.len()];
        let mut stack = vec![initial];
        reach[initial] = true;
        while let Some(s) = stack.pop() {
            for &t in &succ_sets[s] {
                if !reach[t] {
                    reach[t] = true;
                    stack.push(t);
                }
            }
        }
        let mut warnings = Vec::new();
        let keep: Vec<usize> = (0..names.len()).filter(|&i| reach[i]).collect();
        if keep.len() != names.len() {
            let pruned: Vec<&str> = (0..names.len())
                .filter(|&i| !reach[i])
                .map(|i| names[i].as_str())
                .collect();
            warnings.push(format!(
                "pruned {} unreachable state(s): {}",
                pruned.len(),
                pruned.join(" ")
            ));
        }
        let mut remap = vec![usize::MAX; names.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let new_names: Vec<String> = keep.iter().map(|&i| names[i].clone()).collect();
        let new_labels: Vec<BTreeSet<String>> = keep.iter().map(|&i| labels[i].clone()).collect();
        let mut new_index = HashMap::new();
        for (i, n) in new_names.iter().enumerate() {
            new_index.insert(n.clone(), i);
        }
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); keep.len()];
        for &old in &keep {
            let mut ts: Vec<usize> =
                succ_sets[old].iter().map(|&t| remap[t]).filter(|&t| t != usize::MAX).collect();
            ts.sort_by(|&a, &b| new_names[a].cmp(&new_names[b]));
            succs[remap[old]] = ts;
        }

        let ks = KripkeStructure {
            initial: remap[initial],
            names: new_names,
            index: new_index,
            succs,
            labels: new_labels,
        };
        // Runs are infinite: a dead end makes the semantics vacuous.
        for s in 0..ks.names.len() {
            if ks.succs[s].is_empty() {
                return Err(ModelError::DeadEnd { state: ks.names[s].clone() });
            }
        }
        Ok((ks, warnings))
    }

    pub fn state_count(&self) -> usize {
        self.names.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn successors(&self, s: usize) -> &[usize] {
        &self.succs[s]
    }

    pub fn labels_of(&self, s: usize) -> &BTreeSet<String> {
        &self.labels[s]
    }

    pub fn has_prop(&self, s: usize, p: &str) -> bool {
        self.labels[s].contains(p)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.succs[a].contains(&b)
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(|v| v.len()).sum()
    }

    /// Add a proposition to a state. Used to layer derived labellings on top
    /// of a structure (e.g. marking states that satisfy a subformula).
    pub fn add_label(&mut self, s: usize, p: &str) {
        self.labels[s].insert(p.to_string());
    }

    /// Exactly the simple loops of the structure, canonicalized so the state
    /// with the minimal name comes first, sorted by their name sequences.
    ///
    /// Enumeration: for each state `v` in name order, walk simple paths from
    /// `v` restricted to states ranked at least `v`; closing edges back to
    /// `v` yield each loop exactly once, already rotated to its minimal
    /// state.
    pub fn simple_loops(&self) -> Vec<SimpleLoop> {
        let n = self.names.len();
        let mut rank_order: Vec<usize> = (0..n).collect();
        rank_order.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));
        let mut rank = vec![0usize; n];
        for (r, &s) in rank_order.iter().enumerate() {
            rank[s] = r;
        }

        let mut loops = Vec::new();
        let mut path: Vec<usize> = Vec::new();
        let mut on_path = vec![false; n];

        struct Dfs<'a> {
            ks: &'a KripkeStructure,
            rank: &'a [usize],
            start: usize,
            path: &'a mut Vec<usize>,
            on_path: &'a mut Vec<bool>,
            out: &'a mut Vec<SimpleLoop>,
        }
        fn go(d: &mut Dfs, v: usize) {
            d.path.push(v);
            d.on_path[v] = true;
            for &t in d.ks.successors(v) {
                if t == d.start {
                    d.out.push(SimpleLoop { path: d.path.clone() });
                } else if !d.on_path[t] && d.rank[t] > d.rank[d.start] {
                    go(d, t);
                }
            }
            d.on_path[v] = false;
            d.path.pop();
        }

        for &start in &rank_order {
            let mut d = Dfs {
                ks: self,
                rank: &rank,
                start,
                path: &mut path,
                on_path: &mut on_path,
                out: &mut loops,
            };
            go(&mut d, start);
        }
        loops.sort_by(|a, b| {
            let na: Vec<&str> = a.path.iter().map(|&s| self.name(s)).collect();
            let nb: Vec<&str> = b.path.iter().map(|&s| self.name(s)).collect();
            na.cmp(&nb)
        });
        loops
    }

    /// A structure is flat iff no state lies on two distinct simple loops.
    pub fn flatness(&self) -> Flatness {
        let loops = self.simple_loops();
        let mut owner: Vec<Option<usize>> = vec![None; self.names.len()];
        for (i, l) in loops.iter().enumerate() {
            for &s in &l.path {
                if let Some(j) = owner[s] {
                    return Flatness::NotFlat {
                        state: s,
                        loop_a: loops[j].clone(),
                        loop_b: loops[i].clone(),
                    };
                }
                owner[s] = Some(i);
            }
        }
        Flatness::Flat
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.flatness(), Flatness::Flat)
    }

    fn require_flat(&self) -> Result<LoopMap, ModelError> {
        match self.flatness() {
            Flatness::Flat => {}
            Flatness::NotFlat { state, .. } => {
                return Err(ModelError::NotFlat { state: self.name(state).to_string() })
            }
        }
        let loops = self.simple_loops();
        let mut of_state = vec![None; self.names.len()];
        for (i, l) in loops.iter().enumerate() {
            for &s in &l.path {
                of_state[s] = Some(i);
            }
        }
        Ok(LoopMap { loops, of_state })
    }

    /// Streaming enumeration of the path-schema skeletons rooted at the
    /// initial state. Skeleton enumeration may be exponential in the number
    /// of optional loops; the iterator lets callers bound consumption.
    pub fn schema_iter(&self) -> Result<SchemaIter<'_>, ModelError> {
        self.schema_iter_from(self.initial)
    }

    /// As [`schema_iter`](Self::schema_iter), but rooted at an arbitrary
    /// state. Used to enumerate run continuations.
    pub fn schema_iter_from(&self, root: usize) -> Result<SchemaIter<'_>, ModelError> {
        let lm = self.require_flat()?;
        assert!(lm.loops.len() <= 128, "structure has too many loops");
        let frame = Frame {
            state: root,
            segs: Vec::new(),
            row: Vec::new(),
            visited: vec![false; self.names.len()],
            banned: 0u128,
        };
        Ok(SchemaIter { ks: self, lm, stack: vec![frame] })
    }

    /// Every maximal skeleton starting at the initial state, in lexicographic
    /// order of their state sequences. Every run of the structure is denoted
    /// by exactly one (skeleton, positive loop counts) pair; a run that does
    /// not iterate a loop is denoted by the skeleton omitting that loop.
    pub fn enumerate_path_schemas(&self) -> Result<Vec<PathSchemaSkeleton>, ModelError> {
        self.enumerate_path_schemas_from(self.initial)
    }

    pub fn enumerate_path_schemas_from(
        &self,
        root: usize,
    ) -> Result<Vec<PathSchemaSkeleton>, ModelError> {
        let mut v: Vec<PathSchemaSkeleton> = self.schema_iter_from(root)?.collect();
        v.sort_by(|a, b| {
            let ka: Vec<&str> = a.flat_states().iter().map(|&s| self.name(s)).collect();
            let kb: Vec<&str> = b.flat_states().iter().map(|&s| self.name(s)).collect();
            ka.cmp(&kb).then_with(|| a.segments.len().cmp(&b.segments.len()))
        });
        v
            .windows(2)
            .for_each(|w| debug_assert!(w[0] != w[1], "duplicate skeleton emitted"));
        Ok(v)
    }

    /// State at position `i` of the run `prefix . cycle^omega`.
    pub fn lasso_state(prefix: &[usize], cycle: &[usize], i: usize) -> usize {
        if i < prefix.len() {
            prefix[i]
        } else {
            cycle[(i - prefix.len()) % cycle.len()]
        }
    }

    /// Canonical paper-style decomposition of a lasso run: scan left to
    /// right, consuming at each loop state the maximal number of full
    /// iterations of its simple loop; remaining states accumulate into rows.
    ///
    /// Requires flatness; the lasso must be a path of the structure.
    pub fn decompose_lasso(
        &self,
        prefix: &[usize],
        cycle: &[usize],
    ) -> Result<LassoDecomposition, ModelError> {
        let lm = self.require_flat()?;
        assert!(!cycle.is_empty(), "lasso cycle must be non-empty");
        // The lasso must be a path, closing through the cycle.
        {
            let all: Vec<usize> =
                prefix.iter().chain(cycle.iter()).chain(std::iter::once(&cycle[0])).copied().collect();
            for w in all.windows(2) {
                if !self.has_edge(w[0], w[1]) {
                    return Err(ModelError::Syntax {
                        line: 0,
                        col: 0,
                        msg: format!(
                            "lasso is not a path: no edge {} -> {}",
                            self.name(w[0]),
                            self.name(w[1])
                        ),
                    });
                }
            }
        }
        // Normalize: pull trailing prefix states that merely unroll the cycle.
        let mut prefix = prefix.to_vec();
        let mut cycle = cycle.to_vec();
        while let Some(&last) = prefix.last() {
            if last == *cycle.last().expect("cycle non-empty") {
                prefix.pop();
                cycle.rotate_right(1);
            } else {
                break;
            }
        }
        let plen = prefix.len();
        let clen = cycle.len();
        let state_at = |i: usize| KripkeStructure::lasso_state(&prefix, &cycle, i);

        let mut chunks: Vec<(Vec<usize>, u64)> = Vec::new();
        let mut row: Vec<usize> = Vec::new();
        let mut i = 0usize;
        let fuel_limit = 4 * (plen + clen) + 4 * self.state_count() + 16;
        let mut fuel = fuel_limit;
        loop {
            fuel = fuel.checked_sub(1).expect("decomposition exceeded fuel; input is not a lasso of this flat structure");
            let s = state_at(i);
            if let Some(li) = lm.of_state[s] {
                let lp = rotate_to(&lm.loops[li].path, s);
                let lplen = lp.len();
                // Stays in this loop forever? Both the tail and lp^omega are
                // periodic, so agreement over one lcm stretch past the
                // prefix decides it.
                let lcm = clen / gcd(clen, lplen) * lplen;
                let guard = plen.saturating_sub(i) + lcm + lplen;
                let forever = (0..guard).all(|k| state_at(i + k) == lp[k % lplen]);
                if forever {
                    if !row.is_empty() {
                        chunks.push((std::mem::take(&mut row), 1));
                    }
                    return Ok(LassoDecomposition { chunks, final_loop: lp });
                }
                // Maximal finite number of full iterations from position i.
                let mut full = 0u64;
                let mut j = i;
                while (0..lplen).all(|k| state_at(j + k) == lp[k]) {
                    full += 1;
                    j += lplen;
                }
                if full >= 1 {
                    if !row.is_empty() {
                        chunks.push((std::mem::take(&mut row), 1));
                    }
                    chunks.push((lp, full));
                    i = j;
                    continue;
                }
            }
            row.push(s);
            i += 1;
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn rotate_to(path: &[usize], head: usize) -> Vec<usize> {
    let k = path.iter().position(|&s| s == head).expect("head on loop");
    let mut v = path[k..].to_vec();
    v.extend_from_slice(&path[..k]);
    v
}

struct LoopMap {
    loops: Vec<SimpleLoop>,
    of_state: Vec<Option<usize>>,
}

#[derive(Clone)]
struct Frame {
    state: usize,
    segs: Vec<Segment>,
    row: Vec<usize>,
    visited: Vec<bool>,
    banned: u128,
}

/// Depth-first streaming enumeration of path-schema skeletons.
pub struct SchemaIter<'a> {
    ks: &'a KripkeStructure,
    lm: LoopMap,
    stack: Vec<Frame>,
}

impl Iterator for SchemaIter<'_> {
    type Item = PathSchemaSkeleton;

    fn next(&mut self) -> Option<PathSchemaSkeleton> {
        while let Some(f) = self.stack.pop() {
            let s = f.state;
            let loop_here = self.lm.of_state[s];

            // Row-extension branches, pushed first so loop options pop first.
            {
                let mut row = f.row.clone();
                row.push(s);
                let mut visited = f.visited.clone();
                visited[s] = true;
                let mut banned = f.banned;
                if let Some(li) = loop_here {
                    banned |= 1u128 << li;
                }
                // Reverse name order so that pops see successors in order.
                for &t in self.ks.successors(s).iter().rev() {
                    if !visited[t] {
                        self.stack.push(Frame {
                            state: t,
                            segs: f.segs.clone(),
                            row: row.clone(),
                            visited: visited.clone(),
                            banned,
                        });
                    }
                }
            }

            if let Some(li) = loop_here {
                if f.banned & (1u128 << li) == 0 {
                    let u = rotate_to(&self.lm.loops[li].path, s);
                    let mut segs = f.segs.clone();
                    if !f.row.is_empty() {
                        segs.push(Segment { kind: SegmentKind::Row, path: f.row.clone() });
                    }
                    let mut visited = f.visited.clone();
                    for &x in &u {
                        visited[x] = true;
                    }
                    let mut loop_segs = segs.clone();
                    loop_segs.push(Segment { kind: SegmentKind::Loop, path: u.clone() });
                    // Iterate the loop at least once, then continue from its
                    // head with a fresh row.
                    self.stack.push(Frame {
                        state: s,
                        segs: loop_segs.clone(),
                        row: Vec::new(),
                        visited,
                        banned: f.banned | (1u128 << li),
                    });
                    // Or stay in the loop forever: a complete skeleton.
                    return Some(PathSchemaSkeleton { segments: loop_segs });
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG1: &str = "\
# the running flat example
state s0 label p init
state s1
state s2
state s3 label r
state s4 label r
state s5 label q
edge s0 -> s0
edge s0 -> s1
edge s0 -> s2
edge s1 -> s2
edge s2 -> s3
edge s3 -> s2
edge s2 -> s4
edge s4 -> s4
edge s4 -> s5
edge s5 -> s5
";

    fn fig1() -> KripkeStructure {
        let (ks, warn) = KripkeStructure::parse(FIG1).unwrap();
        assert!(warn.is_empty());
        ks
    }

    fn names(ks: &KripkeStructure, path: &[usize]) -> Vec<String> {
        path.iter().map(|&s| ks.name(s).to_string()).collect()
    }

    #[test]
    fn parses_fig1() {
        let ks = fig1();
        assert_eq!(ks.state_count(), 6);
        assert_eq!(ks.edge_count(), 10);
        assert_eq!(ks.name(ks.initial()), "s0");
        assert!(ks.has_prop(ks.state_id("s3").unwrap(), "r"));
        assert!(ks.has_prop(ks.state_id("s4").unwrap(), "r"));
        assert!(ks.has_prop(ks.state_id("s5").unwrap(), "q"));
    }

    #[test]
    fn minimal_self_loop_is_valid() {
        let (ks, _) = KripkeStructure::parse("state a init\nedge a -> a\n").unwrap();
        assert_eq!(ks.state_count(), 1);
        assert!(ks.labels_of(0).is_empty());
    }

    #[test]
    fn dead_end_rejected() {
        let err = KripkeStructure::parse("state a init\nstate b\nedge a -> b\n").unwrap_err();
        assert!(matches!(err, ModelError::DeadEnd { state } if state == "b"));
    }

    #[test]
    fn unknown_state_in_edge() {
        let err = KripkeStructure::parse("state a init\nedge a -> zz\n").unwrap_err();
        assert!(matches!(err, ModelError::UnknownState { name, .. } if name == "zz"));
    }

    #[test]
    fn duplicate_state_rejected() {
        let err = KripkeStructure::parse("state a init\nstate a\nedge a -> a\n").unwrap_err();
        assert!(matches!(err, ModelError::DuplicateState { name, .. } if name == "a"));
    }

    #[test]
    fn unreachable_states_pruned_with_warning() {
        let (ks, warn) =
            KripkeStructure::parse("state a init\nstate z\nedge a -> a\nedge z -> z\n").unwrap();
        assert_eq!(ks.state_count(), 1);
        assert_eq!(warn.len(), 1);
        assert!(warn[0].contains('z'));
    }

    #[test]
    fn simple_loops_fig1() {
        let ks = fig1();
        let loops: Vec<Vec<String>> =
            ks.simple_loops().iter().map(|l| names(&ks, &l.path)).collect();
        assert_eq!(loops, vec![vec!["s0"], vec!["s2", "s3"], vec!["s4"], vec!["s5"]]);
    }

    #[test]
    fn simple_loops_two_state() {
        let (ks, _) =
            KripkeStructure::parse("state a init\nstate b\nedge a -> a\nedge a -> b\nedge b -> a\n")
                .unwrap();
        let loops: Vec<Vec<String>> =
            ks.simple_loops().iter().map(|l| names(&ks, &l.path)).collect();
        assert_eq!(loops, vec![vec!["a"], vec!["a", "b"]]);
    }

    #[test]
    fn acyclic_fragment_has_no_loops() {
        // Self-loop only on the terminal state; the a->b fragment is acyclic.
        let (ks, _) =
            KripkeStructure::parse("state a init\nstate b\nedge a -> b\nedge b -> b\n").unwrap();
        let loops = ks.simple_loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(names(&ks, &loops[0].path), vec!["b"]);
    }

    #[test]
    fn fig1_is_flat() {
        assert!(fig1().is_flat());
    }

    #[test]
    fn two_loops_through_a_state() {
        let (ks, _) =
            KripkeStructure::parse("state a init\nstate b\nedge a -> a\nedge a -> b\nedge b -> a\n")
                .unwrap();
        match ks.flatness() {
            Flatness::NotFlat { state, loop_a, loop_b } => {
                assert_eq!(ks.name(state), "a");
                assert_ne!(loop_a, loop_b);
                assert!(loop_a.path.contains(&state) && loop_b.path.contains(&state));
            }
            Flatness::Flat => panic!("expected non-flat"),
        }
    }

    #[test]
    fn single_self_loop_is_flat() {
        let (ks, _) = KripkeStructure::parse("state a init\nedge a -> a\n").unwrap();
        assert!(ks.is_flat());
    }

    #[test]
    fn schemas_single_self_loop() {
        let (ks, _) = KripkeStructure::parse("state q init\nedge q -> q\n").unwrap();
        let schemas = ks.enumerate_path_schemas().unwrap();
        assert_eq!(schemas.len(), 1);
        assert_eq!(schemas[0].segments.len(), 1);
        assert_eq!(schemas[0].segments[0].kind, SegmentKind::Loop);
    }

    #[test]
    fn schemas_flat_chain() {
        let (ks, _) =
            KripkeStructure::parse("state a init\nstate b\nedge a -> b\nedge b -> b\n").unwrap();
        let schemas = ks.enumerate_path_schemas().unwrap();
        assert_eq!(schemas.len(), 1);
        let s = &schemas[0];
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.segments[0].kind, SegmentKind::Row);
        assert_eq!(names(&ks, &s.segments[0].path), vec!["a"]);
        assert_eq!(s.segments[1].kind, SegmentKind::Loop);
        assert_eq!(names(&ks, &s.segments[1].path), vec!["b"]);
    }

    #[test]
    fn schemas_fig1_contains_expected() {
        let ks = fig1();
        let schemas = ks.enumerate_path_schemas().unwrap();
        let mut found_full = false;
        let mut found_skip_s1 = false;
        for s in &schemas {
            let shape: Vec<(SegmentKind, Vec<String>)> =
                s.segments.iter().map(|g| (g.kind, names(&ks, &g.path))).collect();
            let full = vec![
                (SegmentKind::Loop, vec!["s0".to_string()]),
                (SegmentKind::Row, vec!["s0".into(), "s1".into()]),
                (SegmentKind::Loop, vec!["s2".into(), "s3".into()]),
                (SegmentKind::Row, vec!["s2".into()]),
                (SegmentKind::Loop, vec!["s4".into()]),
                (SegmentKind::Row, vec!["s4".into()]),
                (SegmentKind::Loop, vec!["s5".into()]),
            ];
            if shape == full {
                found_full = true;
            }
            let skip = vec![
                (SegmentKind::Loop, vec!["s0".to_string()]),
                (SegmentKind::Row, vec!["s0".into()]),
                (SegmentKind::Loop, vec!["s2".into(), "s3".into()]),
                (SegmentKind::Row, vec!["s2".into()]),
                (SegmentKind::Loop, vec!["s4".into()]),
                (SegmentKind::Row, vec!["s4".into()]),
                (SegmentKind::Loop, vec!["s5".into()]),
            ];
            if shape == skip {
                found_skip_s1 = true;
            }
        }
        assert!(found_full, "expected the full skeleton through s1");
        assert!(found_skip_s1, "expected the variant skipping s1 via s0->s2");
    }

    #[test]
    fn schemas_end_in_loop_and_fit_length_bound() {
        let ks = fig1();
        for s in ks.enumerate_path_schemas().unwrap() {
            assert_eq!(s.segments.last().unwrap().kind, SegmentKind::Loop);
            assert!(s.total_len() <= 2 * ks.state_count());
        }
    }

    #[test]
    fn expansion_is_a_path() {
        let ks = fig1();
        for s in ks.enumerate_path_schemas().unwrap() {
            for counts_val in 1..=3u64 {
                let counts = vec![counts_val; s.loop_count()];
                let (prefix, cycle) = s.expand(&counts);
                let full: Vec<usize> =
                    prefix.iter().chain(cycle.iter()).chain(cycle.iter()).copied().collect();
                for w in full.windows(2) {
                    assert!(ks.has_edge(w[0], w[1]), "expansion must be a path");
                }
                assert!(ks.has_edge(*cycle.last().unwrap(), cycle[0]));
            }
        }
    }

    #[test]
    fn decompose_matches_spec_example() {
        let ks = fig1();
        let id = |n: &str| ks.state_id(n).unwrap();
        // s0^3 s1 s2 (s3 s2)^2 s4^5 s5^omega
        let prefix = vec![
            id("s0"),
            id("s0"),
            id("s0"),
            id("s1"),
            id("s2"),
            id("s3"),
            id("s2"),
            id("s3"),
            id("s2"),
            id("s4"),
            id("s4"),
            id("s4"),
            id("s4"),
            id("s4"),
        ];
        let cycle = vec![id("s5")];
        let d = ks.decompose_lasso(&prefix, &cycle).unwrap();
        let shape: Vec<(Vec<String>, u64)> =
            d.chunks.iter().map(|(p, n)| (names(&ks, p), *n)).collect();
        assert_eq!(
            shape,
            vec![
                (vec!["s0".to_string()], 3),
                (vec!["s1".to_string()], 1),
                (vec!["s2".to_string(), "s3".to_string()], 2),
                (vec!["s2".to_string()], 1),
                (vec!["s4".to_string()], 5),
            ]
        );
        assert_eq!(names(&ks, &d.final_loop), vec!["s5"]);
    }
}
