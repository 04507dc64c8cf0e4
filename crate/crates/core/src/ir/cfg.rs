//! Per-function control-flow graphs, post-dominators and control dependence.

use std::collections::{BTreeMap, BTreeSet};

use super::{IrFunction, StmtId, Terminator, Var};

/// Control-flow graph of one function. Node `exit` is a synthetic sink that
/// every returning, reverting or stopping block flows into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub blocks: Vec<String>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub exit: usize,
    /// Immediate post-dominator per block (may be `exit`).
    pub ipdom: Vec<Option<usize>>,
    /// Immediate dominator per block, `None` when unreachable from the entry.
    pub idom: Vec<Option<usize>>,
    /// Block -> set of (branching block, branch outcome) it depends on.
    pub block_deps: Vec<BTreeSet<(usize, bool)>>,
    /// Statement -> set of (condition variable, branch outcome).
    pub control_deps: BTreeMap<StmtId, BTreeSet<(Var, bool)>>,
    /// Blocks not reachable from the entry; reported, not rejected.
    pub unreachable: Vec<String>,
}

impl Cfg {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.succs
            .iter()
            .enumerate()
            .flat_map(|(a, ss)| ss.iter().map(move |b| (a, *b)))
            .collect()
    }

    pub fn index_of(&self, block: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b == block)
    }

    pub fn dominates(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.idom[b] {
                Some(d) if d != b => b = d,
                _ => return false,
            }
        }
    }

    /// An edge into a block that dominates its source.
    pub fn is_back_edge(&self, from: usize, to: usize) -> bool {
        self.idom[from].is_some() && self.dominates(to, from)
    }

    /// Union of the natural loops of every back edge into `header`.
    pub fn natural_loop(&self, header: usize) -> BTreeSet<usize> {
        let mut body = BTreeSet::from([header]);
        let mut work: Vec<usize> = self.preds[header]
            .iter()
            .copied()
            .filter(|p| self.is_back_edge(*p, header))
            .collect();
        while let Some(n) = work.pop() {
            if body.insert(n) {
                work.extend(self.preds[n].iter().copied());
            }
        }
        body
    }
}

/// Immediate dominators of the graph `succs` rooted at `root`
/// (Cooper, Harvey and Kennedy's iterative scheme). Nodes unreachable from
/// `root` map to `None`; `root` maps to itself.
pub fn dominators(succs: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let n = succs.len();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    // iterative post-order
    let mut stack = vec![(root, 0usize)];
    visited[root] = true;
    while let Some((node, i)) = stack.last_mut() {
        if let Some(&next) = succs[*node].get(*i) {
            *i += 1;
            if !visited[next] {
                visited[next] = true;
                stack.push((next, 0));
            }
        } else {
            order.push(*node);
            stack.pop();
        }
    }
    let mut po_num = vec![usize::MAX; n];
    for (i, node) in order.iter().enumerate() {
        po_num[*node] = i;
    }
    let mut preds = vec![Vec::new(); n];
    for (a, ss) in succs.iter().enumerate() {
        for &b in ss {
            if visited[a] {
                preds[b].push(a);
            }
        }
    }
    let mut idom = vec![None; n];
    idom[root] = Some(root);
    let mut changed = true;
    while changed {
        changed = false;
        for &node in order.iter().rev() {
            if node == root {
                continue;
            }
            let mut new_idom: Option<usize> = None;
            for &p in &preds[node] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, &po_num, p, cur),
                });
            }
            if new_idom.is_some() && idom[node] != new_idom {
                idom[node] = new_idom;
                changed = true;
            }
        }
    }
    idom
}

fn intersect(idom: &[Option<usize>], po: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while po[a] < po[b] {
            a = idom[a].expect("processed node");
        }
        while po[b] < po[a] {
            b = idom[b].expect("processed node");
        }
    }
    a
}

/// Builds the CFG of `func` and its control-dependence relation
/// (post-dominance frontier over the branch edges).
pub fn build_cfg(func: &IrFunction) -> Cfg {
    let n = func.blocks.len();
    let exit = n;
    let blocks: Vec<String> = func.blocks.iter().map(|b| b.id.clone()).collect();
    let index = |id: &str| blocks.iter().position(|b| b == id).expect("parser checked targets");

    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, b) in func.blocks.iter().enumerate() {
        for t in b.terminator.targets() {
            let t = index(t);
            if !succs[i].contains(&t) {
                succs[i].push(t);
            }
        }
    }
    let mut preds = vec![Vec::new(); n];
    for (a, ss) in succs.iter().enumerate() {
        for &b in ss {
            preds[b].push(a);
        }
    }

    let idom_ext = {
        let mut fwd = succs.clone();
        fwd.push(Vec::new());
        dominators(&fwd, 0)
    };
    let idom: Vec<Option<usize>> = idom_ext[..n].to_vec();
    let unreachable = (0..n).filter(|i| idom[*i].is_none()).map(|i| blocks[i].clone()).collect();

    // Reverse graph rooted at the synthetic exit.
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (a, ss) in succs.iter().enumerate() {
        for &b in ss {
            rev[b].push(a);
        }
    }
    for (i, b) in func.blocks.iter().enumerate() {
        if b.terminator.targets().is_empty() {
            rev[exit].push(i);
        }
    }
    // Blocks stuck in exit-free cycles get a virtual edge to the exit.
    let mut reaches_exit = vec![false; n + 1];
    let mut work = vec![exit];
    reaches_exit[exit] = true;
    while let Some(x) = work.pop() {
        for &p in &rev[x] {
            if !reaches_exit[p] {
                reaches_exit[p] = true;
                work.push(p);
            }
        }
    }
    for (i, reaches) in reaches_exit.iter().enumerate() {
        if !reaches {
            rev[exit].push(i);
        }
    }
    let ipdom_ext = dominators(&rev, exit);
    let ipdom: Vec<Option<usize>> = ipdom_ext[..n].to_vec();

    let mut block_deps: Vec<BTreeSet<(usize, bool)>> = vec![BTreeSet::new(); n];
    for (a, b) in func.blocks.iter().enumerate() {
        let Terminator::JumpI { then_target, else_target, .. } = &b.terminator else {
            continue;
        };
        if then_target == else_target {
            continue;
        }
        let stop = ipdom_ext[a];
        for (target, outcome) in [(then_target, true), (else_target, false)] {
            let mut runner = Some(index(target));
            while let Some(r) = runner {
                if Some(r) == stop || r == exit {
                    break;
                }
                if !block_deps[r].insert((a, outcome)) {
                    break;
                }
                runner = ipdom_ext[r];
            }
        }
    }

    let mut control_deps = BTreeMap::new();
    for (bi, b) in func.blocks.iter().enumerate() {
        let deps: BTreeSet<(Var, bool)> = block_deps[bi]
            .iter()
            .map(|(a, outcome)| match &func.blocks[*a].terminator {
                Terminator::JumpI { cond, .. } => (cond.clone(), *outcome),
                _ => unreachable!("dependences only come from branches"),
            })
            .collect();
        for s in &b.statements {
            control_deps.insert(s.id.clone(), deps.clone());
        }
    }

    Cfg { blocks, succs, preds, exit, ipdom, idom, block_deps, control_deps, unreachable }
}
