pub mod attacks;
pub mod schedules;
pub mod strategies;
