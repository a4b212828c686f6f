"""Decision-sufficient dataset discovery for linear programs."""
