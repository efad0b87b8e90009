//! distillation engine placeholder
