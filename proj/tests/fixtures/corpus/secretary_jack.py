def build():
    user_message = 'You are a friendly secretary named Jack. Tell me about your hobbies in 1 sentence.'
    return user_message
