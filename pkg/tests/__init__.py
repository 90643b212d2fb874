"""structreward tests package."""
