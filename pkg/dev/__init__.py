# Development package 