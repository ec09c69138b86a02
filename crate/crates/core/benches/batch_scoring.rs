use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lrqa_core::item::{Lang, McQaItem, Stage};
use lrqa_core::par::Exec;
use lrqa_core::providers::mock::HashingEmbedder;
use lrqa_core::validation::{fuzzy_substring_score, validate_corpus, ValidationConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "լիճ", "Սևան", "ամենամեծ", "ջրային", "ավազանն", "է", "Հայաստանում", "բարձրությունը", "ծովի", "մակարդակից", "մետր", "գետ", "քաղաք",
    "մայրաքաղաք", "Երևան", "տարի", "հիմնադրվել", "լեզու", "ժեստերի", "մոդալություն",
];

fn execs() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn corpus(pairs: usize, per_pair: usize) -> (Vec<McQaItem>, BTreeMap<String, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut items = Vec::new();
    let mut paragraphs = BTreeMap::new();
    for p in 0..pairs {
        let pair_id = format!("p{p:04}");
        paragraphs.insert(pair_id.clone(), text(&mut rng, 180));
        for q in 0..per_pair {
            let options: Vec<String> = (0..4).map(|_| text(&mut rng, 3)).collect();
            items.push(McQaItem {
                item_id: format!("{pair_id}-q{q:02}"),
                pair_id: pair_id.clone(),
                question: text(&mut rng, 8),
                options,
                correct_index: rng.gen_range(0..4),
                language: Lang::new("hy").unwrap(),
                stage: Stage::Translated,
            });
        }
    }
    (items, paragraphs)
}

fn fuzzy_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<(String, String)> = (0..2000).map(|_| (text(&mut rng, 3), text(&mut rng, 150))).collect();
    let mut g = c.benchmark_group("fuzzy_batch_2000");
    for (name, exec) in execs() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&cases, |(n, h)| fuzzy_substring_score(n, h).unwrap()))
        });
    }
    g.finish();
}

fn validate(c: &mut Criterion) {
    let (items, paragraphs) = corpus(100, 10);
    let emb = HashingEmbedder::new(512);
    let cfg = ValidationConfig::default();
    let mut g = c.benchmark_group("validate_corpus_1000");
    g.sample_size(20);
    for (name, exec) in execs() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| validate_corpus(&items, &paragraphs, &cfg, &emb, exec)));
    }
    g.finish();
}

criterion_group!(benches, fuzzy_batch, validate);
criterion_main!(benches);
