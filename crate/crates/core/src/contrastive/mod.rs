//! Classification and contrastive objectives, the memory bank and the information bank.

pub mod banks;
pub mod losses;
pub mod stage;

pub use banks::{
    ias_loss, irs_loss, snapshot_information_bank, ContrastiveTerm, InformationBank, MemoryBank,
};
pub use losses::{
    cross_entropy, info_nce, l2_normalize_backward, l2_normalize_rows, InfoNceOutput, Negatives,
    UNIT_NORM_TOLERANCE,
};
pub use stage::{stage1_loss, stage2_loss, LossConfig, StageLoss};
