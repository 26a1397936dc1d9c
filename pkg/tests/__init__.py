"""Package init"""