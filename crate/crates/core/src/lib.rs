//! Multi-camera visual odometry fusion with learned uncertainty.

pub mod baselines;
pub mod fusion;
pub mod geometry;
pub mod mdn;
pub mod neuralcore;
pub mod seeding;
pub mod simulator;
