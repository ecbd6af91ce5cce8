"""GradNet: gradual architecture annealing on a numpy autodiff core."""
