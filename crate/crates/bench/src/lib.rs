//! Fixtures shared by the benchmarks: a trained Banana stage at a given pool size.

use metades_core::base::{bagging_pool, PerceptronConfig, Pool};
use metades_core::dataset::{generate_banana, stratified_split, Dataset};
use metades_core::metaclassifier::{train_meta, NaiveBayesModel};
use metades_core::metafeatures::{build_meta_dataset, MetaParams};
use metades_core::region::ReferenceSet;

pub struct Stage {
    pub pool: Pool,
    pub meta_train: Dataset,
    pub dsel: ReferenceSet,
    pub test: Dataset,
    pub model: NaiveBayesModel,
}

pub fn banana_stage(n: usize, pool_size: usize, seed: u64) -> Stage {
    let data = generate_banana(n, seed).expect("banana");
    let mut parts = stratified_split(&data, &[0.25, 0.25, 0.25, 0.25], seed).expect("split");
    let test = parts.pop().expect("part");
    let dsel = parts.pop().expect("part");
    let meta_train = parts.pop().expect("part");
    let train = parts.pop().expect("part");
    let pool = bagging_pool(&train, pool_size, &PerceptronConfig::default(), seed).expect("pool");
    let meta =
        build_meta_dataset(&pool, &meta_train, &MetaParams::default()).expect("meta-dataset");
    let model = train_meta(&meta, 0.75, seed).expect("meta-classifier");
    let dsel = ReferenceSet::build(&pool, dsel).expect("reference set");
    Stage {
        pool,
        meta_train,
        dsel,
        test,
        model,
    }
}
