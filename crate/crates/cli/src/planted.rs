//! Synthetic corpora with planted instances of known simplifiable patterns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplgen::{FormulaDag, Node, NodeId, OpKind, Sort};

/// The planted left-hand sides, in the DAG text format, and what each
/// simplifies to.
pub const PLANTED: [(&str, &str); 8] = [
    ("0 = S BOOL a\n1 = NOT BOOL 0\n2 = NOT BOOL 1\n3 = NOT BOOL 2\n3", "NOT a"),
    ("0 = S BOOL a\n1 = S BOOL b\n2 = AND BOOL 0 1\n3 = NOT BOOL 0\n4 = AND BOOL 2 3\n4", "false"),
    ("0 = S BOOL a\n1 = S BOOL b\n2 = S BOOL c\n3 = AND BOOL 0 1\n4 = OR BOOL 0 2\n5 = OR BOOL 3 4\n5", "OR a c"),
    ("0 = S INT a\n1 = S INT b\n2 = PLUS INT 0 1\n3 = NEG INT 1\n4 = PLUS INT 2 3\n4", "a"),
    ("0 = S INT a\n1 = S INT b\n2 = S INT c\n3 = PLUS INT 0 1\n4 = PLUS INT 0 2\n5 = EQ BOOL 3 4\n5", "EQ b c"),
    ("0 = S BOOL a\n1 = S BOOL b\n2 = S BOOL c\n3 = XOR BOOL 0 1\n4 = XOR BOOL 1 2\n5 = XOR BOOL 3 4\n5", "XOR a c"),
    ("0 = S INT a\n1 = S INT b\n2 = LT BOOL 0 1\n3 = LT BOOL 1 0\n4 = AND BOOL 2 3\n4", "false"),
    ("0 = S INT a\n1 = CONST INT 1\n2 = CONST INT 3\n3 = LT BOOL 0 1\n4 = LT BOOL 0 2\n5 = OR BOOL 3 4\n5", "LT a 3"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability that the next construct is a planted instance rather
    /// than a single filler operation.
    pub planted_rate: f64,
    /// Probability that an operand is a leaf rather than an earlier operation.
    pub leaf_rate: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            min_nodes: 2000,
            max_nodes: 5000,
            planted_rate: 0.35,
            leaf_rate: 0.6,
        }
    }
}

/// One generated benchmark with the number of instances of each planted
/// pattern.
#[derive(Debug, Clone)]
pub struct PlantedDag {
    pub dag: FormulaDag,
    pub instances: [usize; 8],
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    leaves: [Vec<NodeId>; 2],
    ops: [Vec<NodeId>; 2],
    leaf_rate: f64,
}

fn slot(sort: Sort) -> usize {
    usize::from(sort == Sort::Int)
}

impl Gen<'_> {
    fn push(&mut self, n: Node) -> NodeId {
        let sort = n.sort;
        let leaf = n.op.is_leaf();
        self.nodes.push(n);
        let id = self.nodes.len() - 1;
        if leaf {
            self.leaves[slot(sort)].push(id);
        } else {
            self.ops[slot(sort)].push(id);
        }
        id
    }

    fn operand(&mut self, sort: Sort) -> NodeId {
        let s = slot(sort);
        let pool = if self.ops[s].is_empty() || self.rng.gen_bool(self.leaf_rate) {
            &self.leaves[s]
        } else {
            &self.ops[s]
        };
        *pool.choose(self.rng).expect("leaves of both sorts exist")
    }

    fn op(&mut self, op: OpKind, sort: Sort, operands: Vec<NodeId>) -> NodeId {
        self.push(Node::op(op, sort, operands))
    }

    fn filler(&mut self) {
        use OpKind::*;
        let (b, i) = (Sort::Bool, Sort::Int);
        match self.rng.gen_range(0..9) {
            0 => {
                let x = self.operand(b);
                self.op(Not, b, vec![x])
            }
            k @ 1..=3 => {
                let (x, y) = (self.operand(b), self.operand(b));
                self.op([And, Or, Xor][k - 1], b, vec![x, y])
            }
            k @ 4..=5 => {
                let (x, y) = (self.operand(i), self.operand(i));
                self.op([Lt, Eq][k - 4], b, vec![x, y])
            }
            k @ 6..=7 => {
                let (x, y) = (self.operand(i), self.operand(i));
                self.op([Plus, Times][k - 6], i, vec![x, y])
            }
            _ => {
                let (c, x, y) = (self.operand(b), self.operand(i), self.operand(i));
                self.op(ArrAcc, i, vec![c, x, y])
            }
        };
    }

    /// Instantiates planted pattern `k` over fresh operands.
    fn plant(&mut self, k: usize, consts: &[NodeId; 2]) {
        use OpKind::*;
        let (b, i) = (Sort::Bool, Sort::Int);
        match k {
            0 => {
                let a = self.operand(b);
                let x = self.op(Not, b, vec![a]);
                let y = self.op(Not, b, vec![x]);
                self.op(Not, b, vec![y]);
            }
            1 => {
                let (a, c) = (self.operand(b), self.operand(b));
                let x = self.op(And, b, vec![a, c]);
                let y = self.op(Not, b, vec![a]);
                self.op(And, b, vec![x, y]);
            }
            2 => {
                let (a, p, c) = (self.operand(b), self.operand(b), self.operand(b));
                let x = self.op(And, b, vec![a, p]);
                let y = self.op(Or, b, vec![a, c]);
                self.op(Or, b, vec![x, y]);
            }
            3 => {
                let (a, p) = (self.operand(i), self.operand(i));
                let x = self.op(Plus, i, vec![a, p]);
                let y = self.op(Neg, i, vec![p]);
                self.op(Plus, i, vec![x, y]);
            }
            4 => {
                let (a, p, c) = (self.operand(i), self.operand(i), self.operand(i));
                let x = self.op(Plus, i, vec![a, p]);
                let y = self.op(Plus, i, vec![a, c]);
                self.op(Eq, b, vec![x, y]);
            }
            5 => {
                let (a, p, c) = (self.operand(b), self.operand(b), self.operand(b));
                let x = self.op(Xor, b, vec![a, p]);
                let y = self.op(Xor, b, vec![p, c]);
                self.op(Xor, b, vec![x, y]);
            }
            6 => {
                let (a, p) = (self.operand(i), self.operand(i));
                let x = self.op(Lt, b, vec![a, p]);
                let y = self.op(Lt, b, vec![p, a]);
                self.op(And, b, vec![x, y]);
            }
            _ => {
                let a = self.operand(i);
                let x = self.op(Lt, b, vec![a, consts[0]]);
                let y = self.op(Lt, b, vec![a, consts[1]]);
                self.op(Or, b, vec![x, y]);
            }
        }
    }
}

/// Generates one benchmark. Every operation without consumers is a root.
pub fn planted_dag(cfg: &PlantedConfig, rng: &mut ChaCha8Rng) -> PlantedDag {
    let target = rng.gen_range(cfg.min_nodes..=cfg.max_nodes);
    let mut g = Gen {
        rng,
        nodes: Vec::new(),
        leaves: [vec![], vec![]],
        ops: [vec![], vec![]],
        leaf_rate: cfg.leaf_rate,
    };
    let sources = (target / 12).max(4);
    for k in 0..sources {
        let sort = if k % 2 == 0 { Sort::Bool } else { Sort::Int };
        g.push(Node::source(sort, format!("s{k}")));
    }
    let consts = [
        g.push(Node::constant(Sort::Int, 1)),
        g.push(Node::constant(Sort::Int, 3)),
    ];
    let mut instances = [0usize; 8];
    while g.nodes.len() + 3 <= target {
        if g.rng.gen_bool(cfg.planted_rate) {
            let k = g.rng.gen_range(0..8);
            g.plant(k, &consts);
            instances[k] += 1;
        } else {
            g.filler();
        }
    }
    let mut used = vec![false; g.nodes.len()];
    for n in &g.nodes {
        for &o in &n.operands {
            used[o] = true;
        }
    }
    let roots = (0..g.nodes.len())
        .filter(|&i| !used[i] && !g.nodes[i].op.is_leaf())
        .collect();
    let dag = FormulaDag::new(g.nodes, roots, 3).expect("generated DAG is well-formed");
    PlantedDag { dag, instances }
}

/// `count` benchmarks from one seed.
pub fn planted_corpus(count: usize, cfg: &PlantedConfig, seed: u64) -> Vec<PlantedDag> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| planted_dag(cfg, &mut rng)).collect()
}
