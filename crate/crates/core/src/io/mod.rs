//! On-disk formats. Binary files start with a self-describing text header:
//! a magic line, `key = value` lines and an empty line, followed by the
//! payload.

mod header;
pub mod mask;
pub mod pgm;
pub mod report;
pub mod stack;

pub use mask::{load_mask, read_mask, save_mask, write_mask, MaskFile, MASK_MAGIC};
pub use pgm::{load_pgm, read_pgm, save_pgm, write_pgm};
pub use report::Report;
pub use stack::{load_kspace, load_stack, read_stack, save_stack, write_stack, STACK_MAGIC};
