"""blastlab: train agents on a click-to-blast puzzle and rank level difficulty."""

__version__ = "0.1.0"
