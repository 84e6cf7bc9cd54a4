//! Build the three decentralized views for a hand-sized dataset and print
//! each node's neighborhood: rating-difference levels for interactions,
//! relationship coefficients and weights for trust links.

use gdsrec::data::{split_dataset, DatasetBundle, IdMap, RatingRecord, RawDataset, TrustEdge};
use gdsrec::graph::build_graph;

fn tiny() -> gdsrec::Result<DatasetBundle> {
    let rows: &[(usize, usize, u8)] = &[
        (0, 0, 5), (0, 1, 3), (0, 2, 4),
        (1, 0, 4), (1, 1, 3), (1, 3, 1),
        (2, 0, 1), (2, 2, 5), (2, 3, 2),
    ];
    let ratings = rows
        .iter()
        .map(|&(user, item, rating)| RatingRecord { user, item, rating })
        .collect();
    let edge = |src, dst| TrustEdge { src, dst, unrated_endpoint: false };
    let raw = RawDataset {
        users: IdMap::from(vec!["ann".to_string(), "bo".into(), "cy".into()]),
        items: IdMap::from(vec!["tea".to_string(), "jam".into(), "oat".into(), "fig".into()]),
        ratings,
        trust: vec![edge(0, 1), edge(0, 2), edge(2, 0)],
        rated_users: 3,
        self_loops_dropped: 0,
    };
    // keep everything in train so the printout covers all ratings
    split_dataset(&raw, 0.999, 0)
}

pub fn run_example() -> gdsrec::Result<String> {
    let bundle = tiny()?;
    let graph = build_graph(&bundle, 1);
    let mut out = String::new();
    let name = |m: &IdMap, i: usize| m.external(i).unwrap_or("?").to_string();
    for u in 0..graph.num_users() {
        out += &format!("user {} (mean {:.2})\n", name(&bundle.users, u), bundle.user_mean(u));
        for e in graph.user_items(u) {
            out += &format!(
                "  rated {:<4} {}  level {}  (item mean {:.2})\n",
                name(&bundle.items, e.neighbor),
                e.rating,
                e.level,
                bundle.item_mean(e.neighbor)
            );
        }
        for s in graph.social(u) {
            out += &format!(
                "  trusts {:<4} T = {}  weight {:.3}\n",
                name(&bundle.users, s.neighbor),
                s.coefficient,
                s.weight
            );
        }
    }
    for v in 0..graph.num_items() {
        let raters: Vec<String> = graph
            .item_users(v)
            .iter()
            .map(|e| format!("{}:L{}", name(&bundle.users, e.neighbor), e.level))
            .collect();
        out += &format!("item {:<4} raters {}\n", name(&bundle.items, v), raters.join(" "));
    }
    Ok(out)
}

fn main() -> gdsrec::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
