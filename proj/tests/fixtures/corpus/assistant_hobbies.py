def build():
    user_message = "You are a friendly administrative assistant named KC. Tell me about your hobbies in 1 sentence."
    return user_message
