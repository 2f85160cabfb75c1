pub mod build_corpus;
pub mod eval_cmd;
pub mod extract_features;
pub mod query;
pub mod train_joint;
pub mod train_word;
