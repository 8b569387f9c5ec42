use std::collections::{HashMap, VecDeque};

/// A pattern occurrence: `pattern` ends at (inclusive) position `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    pub end: usize,
    pub pattern: usize,
}

#[derive(Debug, Clone, Default)]
struct Node {
    next: HashMap<u32, usize>,
    fail: usize,
    /// Patterns ending at this node, including those reached via failure links.
    outputs: Vec<usize>,
}

/// Aho–Corasick automaton over token ids.
#[derive(Debug, Clone)]
pub struct TokenAutomaton {
    nodes: Vec<Node>,
    patterns: Vec<Vec<u32>>,
}

impl TokenAutomaton {
    /// Patterns must be non-empty; duplicates are allowed and reported separately.
    pub fn new(patterns: Vec<Vec<u32>>) -> Self {
        assert!(patterns.iter().all(|p| !p.is_empty()), "empty pattern");
        let mut nodes = vec![Node::default()];
        for (pid, pattern) in patterns.iter().enumerate() {
            let mut cur = 0;
            for &sym in pattern {
                cur = match nodes[cur].next.get(&sym) {
                    Some(&n) => n,
                    None => {
                        nodes.push(Node::default());
                        let n = nodes.len() - 1;
                        nodes[cur].next.insert(sym, n);
                        n
                    }
                };
            }
            nodes[cur].outputs.push(pid);
        }

        // Breadth-first so a node's failure target is finished before the node.
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut root_children: Vec<(u32, usize)> = nodes[0].next.iter().map(|(&s, &n)| (s, n)).collect();
        root_children.sort_unstable();
        for (_, child) in root_children {
            nodes[child].fail = 0;
            queue.push_back(child);
        }
        while let Some(u) = queue.pop_front() {
            let mut children: Vec<(u32, usize)> = nodes[u].next.iter().map(|(&s, &n)| (s, n)).collect();
            children.sort_unstable();
            for (sym, child) in children {
                let mut f = nodes[u].fail;
                let fail = loop {
                    if let Some(&n) = nodes[f].next.get(&sym) {
                        break n;
                    }
                    if f == 0 {
                        break 0;
                    }
                    f = nodes[f].fail;
                };
                nodes[child].fail = fail;
                let inherited = nodes[fail].outputs.clone();
                let out = &mut nodes[child].outputs;
                out.extend(inherited);
                out.sort_unstable();
                out.dedup();
                queue.push_back(child);
            }
        }
        Self { nodes, patterns }
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn patterns(&self) -> &[Vec<u32>] {
        &self.patterns
    }

    fn step(&self, mut state: usize, sym: u32) -> usize {
        loop {
            if let Some(&n) = self.nodes[state].next.get(&sym) {
                return n;
            }
            if state == 0 {
                return 0;
            }
            state = self.nodes[state].fail;
        }
    }

    /// Every occurrence, ordered by end position then pattern index.
    pub fn find_all(&self, text: &[u32]) -> Vec<Match> {
        let mut state = 0;
        let mut out = Vec::new();
        for (end, &sym) in text.iter().enumerate() {
            state = self.step(state, sym);
            out.extend(self.nodes[state].outputs.iter().map(|&pattern| Match { end, pattern }));
        }
        out
    }

    /// `hit[p]` is true when pattern `p` occurs anywhere in `text`.
    pub fn matched(&self, text: &[u32]) -> Vec<bool> {
        let mut hit = vec![false; self.patterns.len()];
        if self.patterns.is_empty() {
            return hit;
        }
        let mut state = 0;
        for &sym in text {
            state = self.step(state, sym);
            for &p in &self.nodes[state].outputs {
                hit[p] = true;
            }
        }
        hit
    }
}
