/** Wire shapes exchanged with the coordination server's JSON API. */
export {};
