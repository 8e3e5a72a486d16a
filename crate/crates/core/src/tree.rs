//! Binary composition trees and their enumeration.

use std::fmt;

use crate::error::{Error, Result};

/// Largest sentence length accepted by [`enumerate_trees`].
pub const ENUMERATION_CAP: usize = 12;

/// Full binary bracketing over word positions (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BinaryTree {
    Leaf(usize),
    Node(Box<BinaryTree>, Box<BinaryTree>),
}

impl BinaryTree {
    pub fn node(left: BinaryTree, right: BinaryTree) -> Self {
        BinaryTree::Node(Box::new(left), Box::new(right))
    }

    /// Leftmost and rightmost covered positions.
    pub fn span(&self) -> (usize, usize) {
        match self {
            BinaryTree::Leaf(i) => (*i, *i),
            BinaryTree::Node(l, r) => (l.span().0, r.span().1),
        }
    }

    /// Leaf positions, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_leaves(&mut out);
        out
    }

    fn visit_leaves(&self, out: &mut Vec<usize>) {
        match self {
            BinaryTree::Leaf(i) => out.push(*i),
            BinaryTree::Node(l, r) => {
                l.visit_leaves(out);
                r.visit_leaves(out);
            }
        }
    }

    /// Internal nodes as `(i, k, j)`: span `i..=j` split after `k`, in post-order.
    pub fn internal_nodes(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        self.visit_nodes(&mut out);
        out
    }

    fn visit_nodes(&self, out: &mut Vec<(usize, usize, usize)>) {
        if let BinaryTree::Node(l, r) = self {
            l.visit_nodes(out);
            r.visit_nodes(out);
            out.push((l.span().0, l.span().1, r.span().1));
        }
    }

    /// Left-branching tree `((w1 w2) w3) ...` over `n` words.
    pub fn left_branching(n: usize) -> Self {
        assert!(n >= 1);
        (1..n).fold(BinaryTree::Leaf(0), |acc, i| {
            BinaryTree::node(acc, BinaryTree::Leaf(i))
        })
    }

    /// Bracketed rendering with the given surface words, e.g. `((a b) c)`.
    pub fn bracketed<S: AsRef<str>>(&self, words: &[S]) -> String {
        let mut out = String::new();
        self.write_bracketed(&mut out, &|i| words[i].as_ref().to_owned());
        out
    }

    fn write_bracketed(&self, out: &mut String, word: &dyn Fn(usize) -> String) {
        match self {
            BinaryTree::Leaf(i) => out.push_str(&word(*i)),
            BinaryTree::Node(l, r) => {
                out.push('(');
                l.write_bracketed(out, word);
                out.push(' ');
                r.write_bracketed(out, word);
                out.push(')');
            }
        }
    }
}

/// Renders leaves as 1-based placeholders: `((w1 w2) w3)`.
impl fmt::Display for BinaryTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.write_bracketed(&mut out, &|i| format!("w{}", i + 1));
        f.write_str(&out)
    }
}

/// All distinct bracketings of `n` words; there are `catalan(n - 1)` of them.
pub fn enumerate_trees(n: usize) -> Result<Vec<BinaryTree>> {
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    if n == 0 {
        return Err(Error::EmptyLine);
    }
    Ok(trees_over(0, n - 1))
}

/// Every bracketing of the span `i..=j`, ordered by top split.
pub(crate) fn trees_over(i: usize, j: usize) -> Vec<BinaryTree> {
    if i == j {
        return vec![BinaryTree::Leaf(i)];
    }
    let mut out = Vec::new();
    for k in i..j {
        let lefts = trees_over(i, k);
        let rights = trees_over(k + 1, j);
        for l in &lefts {
            for r in &rights {
                out.push(BinaryTree::node(l.clone(), r.clone()));
            }
        }
    }
    out
}

/// Catalan number `C(m) = (2m)! / ((m+1)! m!)`.
pub fn catalan(m: u64) -> u64 {
    let mut c: u64 = 1;
    for i in 0..m {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}
