//! One user's latent offset under each aggregation rule: learned softmax
//! attention, a uniform average, and max (all weight on the top-scoring
//! neighbor).

use gdsrec::data::split_dataset;
use gdsrec::graph::{build_graph, NeighborSampler};
use gdsrec::model::{attention_user, encode_user_interaction, user_offset};
use gdsrec::synthetic::{generate, SyntheticSpec};
use gdsrec::{AttentionMode, ModelParams, VariantFlags};

pub fn run_example() -> gdsrec::Result<Vec<(AttentionMode, Vec<f64>)>> {
    let synth = generate(&SyntheticSpec { users: 20, items: 30, ..Default::default() })?;
    let bundle = split_dataset(&synth.raw, 0.6, 1)?;
    let graph = build_graph(&bundle, 1);
    let params = ModelParams::init(bundle.num_users(), bundle.num_items(), 8, 1);
    let user = 0;
    let encoded: Vec<Vec<f64>> = graph
        .user_items(user)
        .iter()
        .map(|e| encode_user_interaction(&params, e.neighbor, e.level as usize))
        .collect();

    let mut results = Vec::new();
    for mode in [AttentionMode::Softmax, AttentionMode::UniformAvg, AttentionMode::Max] {
        let weights = attention_user(&params, user, &encoded, mode);
        let flags = VariantFlags { attention: mode, ..Default::default() };
        let h = user_offset(&params, &graph, &flags, user, &NeighborSampler::full());
        let shown: Vec<String> = weights.iter().map(|w| format!("{w:.3}")).collect();
        println!("{mode:<8} weights [{}]", shown.join(", "));
        println!("{:<8} offset  {:?}", "", &h[..3]);
        results.push((mode, weights));
    }
    Ok(results)
}

fn main() -> gdsrec::Result<()> {
    run_example().map(|_| ())
}
