# Navigation package for sidewalk robots
# This package contains all navigation components including:
# - Geometry kernels (RANSAC, concave hull, kd-tree, line fitting)
# - Sidewalk world simulation with social-force pedestrians
# - Pedestrian tracking and group formation
# - Group surfing and curb following subgoal planners
# - Socially-aware collision avoidance
# - Mission state machine and episode loop
# - Path similarity evaluation and plotting
