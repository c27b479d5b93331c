//! Aho-Corasick automaton over token ids.
//!
//! Patterns are sequences of interned tokens. Scanning a token stream reports
//! every pattern occurrence, including overlapping and nested ones; overlap
//! resolution happens in the caller.

use std::collections::{HashMap, VecDeque};

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    next: HashMap<u32, u32>,
    fail: u32,
    /// Nearest node on the fail chain (excluding self) that ends a pattern.
    out_link: u32,
    pattern: u32,
    depth: u32,
}

impl Node {
    fn new(depth: u32) -> Self {
        Node {
            next: HashMap::new(),
            fail: ROOT,
            out_link: NONE,
            pattern: NONE,
            depth,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TokenAutomaton {
    symbols: HashMap<String, u32>,
    nodes: Vec<Node>,
}

/// A pattern occurrence over token positions `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Occurrence {
    pub start: usize,
    pub end: usize,
    pub pattern: u32,
}

impl TokenAutomaton {
    /// Builds the automaton. `patterns[i]` is reported as pattern id `i`;
    /// empty patterns are ignored.
    pub fn build<'a, I, P>(patterns: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: IntoIterator<Item = &'a str>,
    {
        let mut symbols: HashMap<String, u32> = HashMap::new();
        let mut nodes = vec![Node::new(0)];

        for (id, pattern) in patterns.into_iter().enumerate() {
            let mut state = ROOT;
            for token in pattern {
                let n = symbols.len() as u32;
                let sym = *symbols.entry(token.to_string()).or_insert(n);
                state = match nodes[state as usize].next.get(&sym) {
                    Some(&s) => s,
                    None => {
                        let depth = nodes[state as usize].depth + 1;
                        nodes.push(Node::new(depth));
                        let s = (nodes.len() - 1) as u32;
                        nodes[state as usize].next.insert(sym, s);
                        s
                    }
                };
            }
            if state != ROOT {
                nodes[state as usize].pattern = id as u32;
            }
        }

        // breadth-first fail links
        let mut queue: VecDeque<u32> = nodes[ROOT as usize].next.values().copied().collect();
        while let Some(s) = queue.pop_front() {
            let edges: Vec<(u32, u32)> = nodes[s as usize].next.iter().map(|(&k, &v)| (k, v)).collect();
            for (sym, child) in edges {
                let mut f = nodes[s as usize].fail;
                let fail = loop {
                    if let Some(&t) = nodes[f as usize].next.get(&sym) {
                        if t != child {
                            break t;
                        }
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = nodes[f as usize].fail;
                };
                nodes[child as usize].fail = fail;
                nodes[child as usize].out_link = if nodes[fail as usize].pattern != NONE {
                    fail
                } else {
                    nodes[fail as usize].out_link
                };
                queue.push_back(child);
            }
        }

        TokenAutomaton { symbols, nodes }
    }

    fn step(&self, mut state: u32, sym: u32) -> u32 {
        loop {
            if let Some(&t) = self.nodes[state as usize].next.get(&sym) {
                return t;
            }
            if state == ROOT {
                return ROOT;
            }
            state = self.nodes[state as usize].fail;
        }
    }

    /// Reports all occurrences in a token stream. `breaks[i]` true means token
    /// `i` cannot continue a pattern that began before it.
    pub fn find_all<'a>(&self, tokens: impl IntoIterator<Item = (&'a str, bool)>, out: &mut Vec<Occurrence>) {
        let mut state = ROOT;
        for (pos, (token, brk)) in tokens.into_iter().enumerate() {
            if brk {
                state = ROOT;
            }
            state = match self.symbols.get(token) {
                Some(&sym) => self.step(state, sym),
                None => ROOT,
            };
            let mut s = if self.nodes[state as usize].pattern != NONE {
                state
            } else {
                self.nodes[state as usize].out_link
            };
            while s != NONE {
                let node = &self.nodes[s as usize];
                out.push(Occurrence {
                    start: pos + 1 - node.depth as usize,
                    end: pos + 1,
                    pattern: node.pattern,
                });
                s = node.out_link;
            }
        }
    }
}
