use jitbatch::corpus::{generate_corpus, GenConfig};
use jitbatch::treelstm::{TreeLstm, TreeLstmConfig};
use jitbatch::{BatchingScope, PlanCache};
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hidden: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let input: usize = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(hidden * 2);
    let records = generate_corpus(&GenConfig {
        trees: 512,
        seed: 1,
        ..GenConfig::default()
    });
    let trees: Vec<_> = records.into_iter().map(|r| r.tree).collect();
    let vocab = trees.iter().map(|t| t.max_token()).max().unwrap() as usize + 1;
    let model = TreeLstm::new(TreeLstmConfig::new(input, hidden, vocab), 0);
    let cache = Arc::new(PlanCache::new());

    for round in 0..3 {
        let t0 = Instant::now();
        let scope = BatchingScope::open_with_cache(Arc::clone(&cache)).unwrap();
        let bound = model.bind(&scope).unwrap();
        let mut handles = Vec::new();
        for t in &trees {
            handles.push(bound.encode_tree(&scope, t).unwrap());
        }
        let nodes = scope.op_node_count();
        let t_record = t0.elapsed();

        let t1 = Instant::now();
        scope.close().unwrap();
        let t_flush = t1.elapsed();

        let t2 = Instant::now();
        for (h, _) in &handles {
            h.value().unwrap();
        }
        let t_extract = t2.elapsed();

        let t3 = Instant::now();
        for t in &trees {
            jitbatch::treelstm::eager::encode_tree(&model, t).unwrap();
        }
        let t_eager = t3.elapsed();

        println!(
            "round {round}: nodes {nodes}  record {:?} ({:.0} ns/node)  flush {:?} ({:.0} ns/node)  extract {:?}  | eager {:?} ({:.0} ns/node)",
            t_record, t_record.as_nanos() as f64 / nodes as f64,
            t_flush, t_flush.as_nanos() as f64 / nodes as f64,
            t_extract,
            t_eager, t_eager.as_nanos() as f64 / nodes as f64,
        );
    }
}
