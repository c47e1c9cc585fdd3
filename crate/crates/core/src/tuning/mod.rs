//! Freeze policies, parameter accounting, step-cost estimates and the
//! optimizer restricted to trainable tensors.

mod cost;
mod ledger;
mod optim;
mod policy;

pub use cost::{backward_blocks, block_forward_flops, estimate_step_cost, StepCost};
pub use ledger::{count_params, group_digits, ledger_table, table_csv, table_text, Convention, LedgerRow, ParamLedger, TableRow};
pub use optim::{zero_grads, AdamW, OptimizerHp};
pub use policy::{apply_policy, FreezePolicy};
