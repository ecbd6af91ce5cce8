"""Entry point for the GradNet annealing command-line tool."""

from src.app import main

if __name__ == "__main__":
    main()
