# Soft-penalty Monge-Kantorovich curve fitting
