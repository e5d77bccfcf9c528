//! Dense tensors with reverse-mode differentiation, recurrent cells, a
//! finite-difference gradient checker and a named-tensor archive format.

mod archive;
mod cells;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use archive::{TensorArchive, FORMAT_VERSION};
pub use cells::{gru_cell, init_weight, lstm_cell, GruCell, LstmLayer, LstmState, StackedLstm};
pub use gradcheck::{grad_check, grad_check_with, rel_err, GradCheckOptions, GradCheckReport};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{sigmoid, softmax, Tape, Var};
pub use tensor::Tensor;
