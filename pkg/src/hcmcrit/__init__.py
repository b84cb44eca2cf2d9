"""Critical behaviour of random graphs with community structure."""
